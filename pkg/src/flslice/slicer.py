"""Slice extraction and differential correctness checking.

The fixpoint set determines the residual calls: every state's first
component, plus any call left in a stack that the first components do not
already cover. One residual rule is rebuilt per residual function by
symbolically pushing the known arguments through the original body: known
case selectors keep only their branch (the rest turn into TOP), unknown
selectors keep every branch, calls to residual functions survive, and calls
to anything else become TOP. The checker then replays goals in both programs
and compares values and answers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .interp import Answer, evaluate
from .reach import FixpointTrace, StateSet, op_rooted_calls, reachable_states
from .terms import (
    Branch,
    Case,
    Cons,
    FreshNames,
    Fun,
    Program,
    Rule,
    State,
    Subst,
    Term,
    TOP,
    TOP_NAME,
    Var,
    abstraction_violations,
    format_term,
    is_closed,
    is_top,
    msg,
    term_key,
    term_vars,
)


@dataclass(frozen=True)
class ResidualCall:
    term: Term  # operation-rooted, case-free
    origin: str  # "state-component" | "stack-call"


@dataclass
class ResidualSet:
    calls: list[ResidualCall]

    def terms(self) -> list[Term]:
        return [c.term for c in self.calls]

    def function_names(self) -> set[str]:
        return {c.term.name for c in self.calls if isinstance(c.term, Fun)}

    def for_function(self, fname: str) -> list[ResidualCall]:
        return [c for c in self.calls if isinstance(c.term, Fun) and c.term.name == fname]


def residual_calls(states: StateSet) -> ResidualSet:
    """First components, plus stack calls not covered by them."""
    components = [s.expr for s in states]
    out = [ResidualCall(t, "state-component") for t in components]
    seen = {term_key(t) for t in components}
    for s in states:
        for t in op_rooted_calls(s.stack):
            k = term_key(t)
            if k in seen:
                continue
            if not is_closed(t, components):
                seen.add(k)
                out.append(ResidualCall(t, "stack-call"))
    return ResidualSet(out)


# ---------------------------------------------------------------------------
# the simplified unfolding calculus


def simplify_unfold(body: Term, rho: Subst, residual_fnames: set[str],
                    trace: Optional[list[str]] = None) -> Term:
    """Residualize one rule body under the argument bindings ``rho``.

    Deterministic and total: each shape of expression and binding picks
    exactly one rule. ``trace`` (when given) collects the rule names in
    application order.
    """

    def tag(name: str) -> None:
        if trace is not None:
            trace.append(name)

    def go(e: Term, rho: Subst) -> Term:
        if isinstance(e, Var):
            tag("var")
            return e
        if isinstance(e, Cons):
            tag("cons")
            return Cons(e.name, tuple(go(a, rho) for a in e.args))
        if isinstance(e, Fun):
            if e.name in residual_fnames:
                tag("fun")
                return Fun(e.name, tuple(go(a, rho) for a in e.args))
            tag("remove")
            return TOP
        assert isinstance(e, Case) and isinstance(e.arg, Var)
        x = e.arg.name
        current = rho.get(x)
        if isinstance(current, Cons):
            tag("select")
            branches = []
            for br in e.branches:
                if br.pattern.name == current.name and len(br.pattern.args) == len(current.args):
                    updates = {
                        v.name: a for v, a in zip(br.pattern.args, current.args)  # type: ignore[union-attr]
                    }
                    branches.append(Branch(br.pattern, go(br.body, rho.override(updates))))
                else:
                    branches.append(Branch(br.pattern, TOP))
            return Case(e.flex, e.arg, tuple(branches))
        # unknown selector: a variable, or (after a merge that outran the
        # flattening) an operation-rooted term whose value is open; within
        # branch i the selector is known to match the branch pattern
        tag("guess")
        branches = []
        for br in e.branches:
            pat_vars = [v.name for v in br.pattern.args]  # type: ignore[union-attr]
            inner = rho.without(pat_vars + [x])
            if x not in pat_vars:
                inner = inner.override({x: br.pattern})
            branches.append(Branch(br.pattern, go(br.body, inner)))
        return Case(e.flex, e.arg, tuple(branches))

    return go(body, rho)


# ---------------------------------------------------------------------------
# slice construction


class SliceError(Exception):
    pass


def build_slice(residuals: ResidualSet, program: Program) -> Program:
    """One rule per residual function, in original program order.

    A function with no residual call is omitted, which reads as
    ``f(xs) = TOP``. Residual calls naming an undefined function stand for
    exactly that deleted form and contribute no rule. When one function has
    several residual calls (a state component plus uncovered stack calls),
    they are merged by msg first so the single rebuilt rule covers them all.
    """
    fresh = FreshNames()
    rules = []
    for rule in program.rules:
        calls = residuals.for_function(rule.fname)
        if not calls:
            continue
        calls = sorted(calls, key=lambda c: (c.origin != "state-component", term_key(c.term)))
        merged = calls[0].term
        for other in calls[1:]:
            merged, _, _ = msg(merged, other.term, fresh)
        assert isinstance(merged, Fun)
        if len(merged.args) != len(rule.params):
            raise SliceError(f"residual call to {rule.fname} has the wrong arity")
        rho = Subst(dict(zip(rule.params, merged.args)))
        body = simplify_unfold(rule.body, rho, residuals.function_names())
        rules.append(Rule(rule.fname, rule.params, body))
    return Program(rules)


def slice_program(program: Program, criterion: Term,
                  fuel: Optional[int] = None) -> tuple[Program, FixpointTrace]:
    """End-to-end forward slice of ``program`` w.r.t. ``criterion``."""
    states, trace = reachable_states(program, criterion, fuel=fuel)
    return build_slice(residual_calls(states), program), trace


# ---------------------------------------------------------------------------
# differential checking


@dataclass
class Divergence:
    goal: Term
    original: list[str]
    sliced: list[str]
    reason: str


@dataclass
class SliceReport:
    goals_tested: int = 0
    goals_skipped: int = 0
    agreements: int = 0
    divergences: list[Divergence] = field(default_factory=list)
    top_reached: list[Term] = field(default_factory=list)
    structural_violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.divergences and not self.top_reached and not self.structural_violations


@dataclass(frozen=True)
class CheckLimits:
    max_steps: int = 10_000
    max_answers: int = 50


def check_correct_slice(program: Program, sliced: Program, goals: Iterable[Term],
                        limits: CheckLimits = CheckLimits()) -> SliceReport:
    """Replay goals in both programs and compare observable behaviour.

    Goals whose original evaluation suspends or is truncated by the limits
    are skipped (the correctness statement assumes neither). Answers must
    agree up to variable renaming; sliced values may contain TOP at inner
    positions. Results of exactly TOP and paths stuck on a TOP case argument
    are invisible to the comparison (they mirror failing original paths);
    when the answer sets do differ and such a path exists, the goal is also
    listed as having reached deleted code.
    """
    report = SliceReport()
    report.structural_violations = abstraction_violations(sliced, program)
    for goal in goals:
        orig = evaluate(goal, program, limits.max_steps, limits.max_answers, deep=True)
        new = evaluate(goal, sliced, limits.max_steps, limits.max_answers, deep=True)
        if orig.suspended_paths or not orig.exhausted or not new.exhausted:
            report.goals_skipped += 1
            continue
        report.goals_tested += 1
        top_hit = new.top_reached_paths > 0
        usable = []
        for a in new.answers:
            if is_top(a.value):
                top_hit = True
            else:
                usable.append(a)
        if _answers_agree(goal, orig.answers, usable):
            report.agreements += 1
        else:
            if top_hit:
                report.top_reached.append(goal)
            gv = term_vars(goal)
            report.divergences.append(
                Divergence(
                    goal,
                    [_show(a, gv) for a in orig.answers],
                    [_show(a, gv) for a in new.answers],
                    "reached deleted code" if top_hit else "answer sets differ",
                )
            )
    return report


def _show(a: Answer, goal_vars: list[str]) -> str:
    binds = ", ".join(f"{v} -> {format_term(a.binding.get(v))}" for v in goal_vars if v in a.binding)
    return f"{format_term(a.value)} {{{binds}}}"


def _answers_agree(goal: Term, original: list[Answer], sliced: list[Answer]) -> bool:
    if len(original) != len(sliced):
        return False
    gv = term_vars(goal)
    remaining = list(sliced)
    for oa in original:
        hit = None
        for i, sa in enumerate(remaining):
            if _answer_matches(gv, oa, sa):
                hit = i
                break
        if hit is None:
            return False
        remaining.pop(hit)
    return True


def _answer_matches(goal_vars: list[str], orig: Answer, sliced: Answer) -> bool:
    """Same answer substitution modulo renaming; sliced value abstracts the
    original value under the binding correspondence."""
    fwd: dict[str, str] = {}
    bwd: dict[str, str] = {}

    def pair(a: Term, b: Term) -> bool:
        # walk sliced against original; TOP in the sliced term covers anything
        if is_top(a):
            return True
        if isinstance(a, Var) and isinstance(b, Var):
            if fwd.get(a.name, b.name) != b.name or bwd.get(b.name, a.name) != a.name:
                return False
            fwd[a.name] = b.name
            bwd[b.name] = a.name
            return True
        if isinstance(a, Cons) and isinstance(b, Cons):
            return (
                a.name == b.name
                and len(a.args) == len(b.args)
                and all(pair(x, y) for x, y in zip(a.args, b.args))
            )
        return False

    def binding_pair(a: Term, b: Term) -> bool:
        # substitutions must match exactly (no TOP allowed in bindings)
        if isinstance(a, Var) and isinstance(b, Var):
            return pair(a, b)
        if isinstance(a, Cons) and isinstance(b, Cons) and not is_top(a):
            return (
                a.name == b.name
                and len(a.args) == len(b.args)
                and all(binding_pair(x, y) for x, y in zip(a.args, b.args))
            )
        return False

    for v in goal_vars:
        if not binding_pair(sliced.binding.get(v), orig.binding.get(v)):
            return False
    return pair(sliced.value, orig.value)


# ---------------------------------------------------------------------------
# goal enumeration for the checker


def program_constructors(program: Program, criterion: Term) -> list[tuple[str, int]]:
    """Constructor signature observed in the program and criterion, TOP excluded."""
    seen: dict[str, int] = {}

    def walk(t: Term) -> None:
        if isinstance(t, Cons):
            if t.name != TOP_NAME:
                seen.setdefault(t.name, len(t.args))
            for a in t.args:
                walk(a)
        elif isinstance(t, Fun):
            for a in t.args:
                walk(a)
        elif isinstance(t, Case):
            walk(t.arg)
            for br in t.branches:
                walk(br.pattern)
                walk(br.body)

    for r in program.rules:
        walk(r.body)
    walk(criterion)
    return sorted(seen.items())


def ground_terms(constructors: list[tuple[str, int]], size_bound: int) -> list[Term]:
    """All ground constructor terms with at most ``size_bound`` symbols."""
    by_size: dict[int, list[Term]] = {i: [] for i in range(size_bound + 1)}
    for size in range(1, size_bound + 1):
        for name, arity in constructors:
            if arity == 0:
                if size == 1:
                    by_size[1].append(Cons(name))
                continue
            budget = size - 1
            if budget < arity:
                continue
            for split in _compositions(budget, arity):
                pools = [by_size[k] for k in split]
                for combo in itertools.product(*pools):
                    by_size[size].append(Cons(name, tuple(combo)))
    out: list[Term] = []
    for size in range(1, size_bound + 1):
        out.extend(by_size[size])
    return out


def _compositions(total: int, parts: int) -> Iterable[tuple[int, ...]]:
    if parts == 1:
        if total >= 1:
            yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def enumerate_goals(criterion: Term, program: Program, size_bound: int = 3) -> list[Term]:
    """Instantiations of the criterion's free variables: every combination of
    ground constructor terms up to the bound, or left free."""
    gv = term_vars(criterion)
    pool: list[Optional[Term]] = [None]
    pool.extend(ground_terms(program_constructors(program, criterion), size_bound))
    out = []
    for combo in itertools.product(pool, repeat=len(gv)):
        binding = Subst({v: t for v, t in zip(gv, combo) if t is not None})
        out.append(binding.apply(criterion))
    return out
