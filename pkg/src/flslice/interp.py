"""Reference interpreter: small-step lazy narrowing over flat programs.

The step relation has four rules. ``select`` matches a constructor-rooted
case argument, ``guess`` non-deterministically binds a free variable in a
flexible case, ``case-eval`` steps inside a case argument and propagates its
binding outward, and ``fun`` unfolds a function call with a fresh rule
variant. Rigid cases on free variables suspend. Evaluation stops at head
normal form; deep mode keeps forcing under constructor spines, which is what
differential slice checking observes.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Union

from .terms import (
    Case,
    Cons,
    FreshNames,
    Fun,
    Program,
    Subst,
    Term,
    TOP,
    Var,
    format_term,
    instantiate,
    is_top,
    is_value,
    term_key,
    term_vars,
)


@dataclass(frozen=True)
class StepAlt:
    binding: Subst
    term: Term
    tag: str  # "select" | "guess" | "case-eval" | "fun"


@dataclass(frozen=True)
class Steps:
    alts: tuple[StepAlt, ...]


@dataclass(frozen=True)
class ValueStop:
    pass


@dataclass(frozen=True)
class Suspended:
    pass


@dataclass(frozen=True)
class TopReached:
    pass


@dataclass(frozen=True)
class MatchFailure:
    pass


StepOutcome = Union[Steps, ValueStop, Suspended, TopReached, MatchFailure]


def step(e: Term, program: Program, fresh: FreshNames) -> StepOutcome:
    """One step of the standard semantics at the root of ``e``.

    Case arguments not in head normal form are followed iteratively (a
    demanded chain can nest one case per unfolding, so recursing here would
    bound derivation length by the interpreter stack).
    """
    spine: list[Case] = []  # enclosing cases, outermost first
    cur = e
    base: StepOutcome
    while True:
        if is_value(cur):
            assert not spine
            return ValueStop()
        if isinstance(cur, Fun):
            rule = program.lookup(cur.name)
            if rule is None:
                # an absent rule reads f(xs) = TOP
                base = Steps((StepAlt(Subst(), TOP, "fun"),))
            else:
                if len(cur.args) != len(rule.params):
                    raise ValueError(f"arity mismatch calling {cur.name}")
                base = Steps((StepAlt(Subst(), instantiate(rule, cur.args, fresh), "fun"),))
            break
        assert isinstance(cur, Case)
        arg = cur.arg
        if is_top(arg):
            return TopReached()
        if isinstance(arg, Cons):
            base = _select(cur, arg)
            break
        if isinstance(arg, Var):
            if not cur.flex:
                return Suspended()
            alts = []
            for br in cur.branches:
                binding = Subst({arg.name: br.pattern})
                alts.append(StepAlt(binding, binding.apply(br.body), "guess"))
            base = Steps(tuple(alts)) if alts else MatchFailure()
            break
        spine.append(cur)
        cur = arg
    if not isinstance(base, Steps):
        return base
    if not spine:
        return base
    alts = []
    for alt in base.alts:
        rebuilt = alt.term
        for outer in reversed(spine):
            shell = alt.binding.apply(Case(outer.flex, Var("_hole"), outer.branches))
            assert isinstance(shell, Case)
            rebuilt = Case(outer.flex, rebuilt, shell.branches)
        alts.append(StepAlt(alt.binding, rebuilt, "case-eval"))
    return Steps(tuple(alts))


def _select(case: Case, arg: Cons) -> StepOutcome:
    for br in case.branches:
        if br.pattern.name == arg.name and len(br.pattern.args) == len(arg.args):
            binding = Subst(
                {v.name: a for v, a in zip(br.pattern.args, arg.args)}  # type: ignore[union-attr]
            )
            return Steps((StepAlt(Subst(), binding.apply(br.body), "select"),))
    return MatchFailure()


# ---------------------------------------------------------------------------
# deep forcing: step the leftmost non-constructor position under the spine


def deep_done(t: Term) -> bool:
    if isinstance(t, Var):
        return True
    if isinstance(t, Cons):
        return all(deep_done(a) for a in t.args)
    return False


def _step_under(t: Term, program: Program, fresh: FreshNames) -> StepOutcome:
    if isinstance(t, Cons):
        for i, a in enumerate(t.args):
            if deep_done(a):
                continue
            inner = _step_under(a, program, fresh)
            if not isinstance(inner, Steps):
                return inner
            alts = []
            for alt in inner.alts:
                spliced = Cons(t.name, t.args[:i] + (alt.term,) + t.args[i + 1 :])
                alts.append(StepAlt(alt.binding, alt.binding.apply(spliced), alt.tag))
            return Steps(tuple(alts))
        return ValueStop()
    return step(t, program, fresh)


# ---------------------------------------------------------------------------
# breadth-first evaluation


@dataclass(frozen=True)
class Answer:
    value: Term
    binding: Subst  # restricted to the goal's free variables
    steps: int


@dataclass
class EvalResult:
    answers: list[Answer] = field(default_factory=list)
    exhausted: bool = True
    suspended_paths: int = 0
    top_reached_paths: int = 0
    failed_paths: int = 0


def evaluate(
    goal: Term,
    program: Program,
    max_steps: int = 10_000,
    max_answers: int = 50,
    deep: bool = False,
    fresh: Optional[FreshNames] = None,
) -> EvalResult:
    """Enumerate derivations breadth-first, collecting value/answer pairs.

    Shallow mode stops at head normal form; deep mode forces constructor
    arguments as well. ``max_steps`` is the total step budget of the whole
    search (which also bounds every path); ``exhausted`` is True only when no
    frontier remained within the limits.
    """
    if max_steps <= 0 or max_answers <= 0:
        raise ValueError("limits must be positive")
    fresh = fresh or FreshNames()
    goal_vars = term_vars(goal)
    result = EvalResult()
    seen_answers: set[str] = set()
    frontier: deque[tuple[Term, Subst, int]] = deque([(goal, Subst(), 0)])
    budget = max_steps

    def record(e: Term, acc: Subst, steps_taken: int) -> None:
        binding = acc.restrict(goal_vars)
        key = _answer_key(e, binding, goal_vars)
        if key not in seen_answers:
            seen_answers.add(key)
            result.answers.append(Answer(e, binding, steps_taken))

    while frontier:
        if len(result.answers) >= max_answers:
            result.exhausted = False
            return result
        e, acc, taken = frontier.popleft()
        outcome = _step_under(e, program, fresh) if deep else step(e, program, fresh)
        if isinstance(outcome, ValueStop):
            record(e, acc, taken)
            continue
        if isinstance(outcome, Suspended):
            result.suspended_paths += 1
            continue
        if isinstance(outcome, TopReached):
            result.top_reached_paths += 1
            continue
        if isinstance(outcome, MatchFailure):
            result.failed_paths += 1
            continue
        assert isinstance(outcome, Steps)
        if budget <= 0:
            result.exhausted = False
            continue
        budget -= 1
        for alt in outcome.alts:
            frontier.append((alt.term, alt.binding.compose(acc), taken + 1))
    return result


def _answer_key(value: Term, binding: Subst, goal_vars: list[str]) -> str:
    joined = Cons("_ans", (value,) + tuple(binding.get(v) for v in goal_vars))
    return term_key(joined)


def format_answer(a: Answer, goal_vars: list[str]) -> str:
    """Render one value/answer pair; unconstrained variables introduced by
    the search are renamed canonically so output is counter-independent."""
    renames: dict[str, Term] = {}

    def canon(t: Term) -> Term:
        for name in term_vars(t):
            if name not in goal_vars and name not in renames:
                renames[name] = Var(f"_{_letters(len(renames))}")
        return Subst(renames).apply(t)

    shown = [v for v in goal_vars if v in a.binding]
    inner = ", ".join(f"{v} -> {format_term(canon(a.binding.get(v)))}" for v in shown)
    return f"{format_term(canon(a.value))}  {{{inner}}}"


def _letters(n: int) -> str:
    out = ""
    while True:
        out = chr(ord("a") + n % 26) + out
        n = n // 26 - 1
        if n < 0:
            return out
