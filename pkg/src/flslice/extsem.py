"""Extended small-step semantics on states for reachability analysis.

A state pairs an expression with a stack of delayed outer calls. On top of
select/guess/fun, two rules move material between the expression and the
stack: ``flatten`` extracts a demanded inner call into a fresh stack frame
when unfolding the outer call would otherwise interleave two functions, and
``replace`` plugs a computed value back into the topmost frame. Unlike the
reference interpreter, steps carry no bindings (only reachability matters)
and guess also fires on rigid cases, since with partial information every
alternative must be explored.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .terms import (
    Case,
    Cons,
    FreshNames,
    Frame,
    Fun,
    Program,
    State,
    Subst,
    Term,
    Var,
    instantiate,
    is_top,
    is_value,
    match,
)


@dataclass(frozen=True)
class ExtStep:
    tag: str  # "select" | "guess" | "flatten" | "fun" | "replace"
    next: State


def _select_branch(case: Case, arg: Cons) -> Optional[Term]:
    for br in case.branches:
        if br.pattern.name == arg.name and len(br.pattern.args) == len(arg.args):
            binding = Subst({v.name: a for v, a in zip(br.pattern.args, arg.args)})  # type: ignore[union-attr]
            return binding.apply(br.body)
    return None


def _guess_branches(case: Case) -> list[Term]:
    out = []
    for br in case.branches:
        assert isinstance(case.arg, Var)
        out.append(Subst({case.arg.name: br.pattern}).apply(br.body))
    return out


def split_demanded(call: Fun, stack: tuple[Frame, ...], program: Program,
                   fresh: FreshNames) -> Optional[State]:
    """The flattening oracle: delay ``call`` when its unfolding demands an
    inner function call.

    Unfolds the rule body and reduces with select/guess only, exploring guess
    branches depth-first in textual order. If some derivation ends at a case
    whose argument is operation-rooted, that argument becomes the new first
    component and ``call`` (with the demanded occurrence replaced by a fresh
    hole) is pushed as a frame. Returns None when no derivation demands an
    inner call, or when ``call`` has no rule.
    """
    rule = program.lookup(call.name)
    if rule is None:
        return None
    body = instantiate(rule, call.args, fresh)

    def search(e: Term) -> Optional[Term]:
        if not isinstance(e, Case):
            return None
        arg = e.arg
        if isinstance(arg, Fun):
            return arg
        if isinstance(arg, Cons):
            if is_top(arg):
                return None
            nxt = _select_branch(e, arg)
            return search(nxt) if nxt is not None else None
        if isinstance(arg, Var):
            for alt in _guess_branches(e):
                found = search(alt)
                if found is not None:
                    return found
            return None
        raise AssertionError("case argument cannot be a case in an unfolded body")

    demanded = search(body)
    if demanded is None:
        return None
    hole = fresh()
    ctx = _replace_first(call, demanded, Var(hole))
    extracted: Term = demanded
    if ctx is None:
        # a guess instantiated a call-argument variable on the way to the
        # demand, so the demanded call is an instance of a call subterm
        # rather than an exact occurrence; extract that (more general)
        # subterm instead, which keeps frame reconstruction exact
        found = _replace_first_matching(call, demanded, Var(hole))
        if found is None:
            return None
        extracted, ctx = found
    return State(extracted, (Frame(ctx, hole),) + stack)


def _replace_first(t: Term, target: Term, replacement: Term) -> Optional[Term]:
    """Replace the leftmost-outermost occurrence of ``target`` in ``t``."""
    if t == target:
        return replacement
    if isinstance(t, (Cons, Fun)):
        for i, a in enumerate(t.args):
            done = _replace_first(a, target, replacement)
            if done is not None:
                args = t.args[:i] + (done,) + t.args[i + 1 :]
                return Cons(t.name, args) if isinstance(t, Cons) else Fun(t.name, args)
    return None


def _replace_first_matching(t: Term, target: Term,
                            replacement: Term) -> Optional[tuple[Term, Term]]:
    """Replace the leftmost-outermost operation-rooted subterm that ``target``
    instantiates; returns (the replaced subterm, the rewritten term)."""
    if isinstance(t, Fun) and match(t, target) is not None:
        return t, replacement
    if isinstance(t, (Cons, Fun)):
        for i, a in enumerate(t.args):
            found = _replace_first_matching(a, target, replacement)
            if found is not None:
                sub, done = found
                args = t.args[:i] + (done,) + t.args[i + 1 :]
                rebuilt = Cons(t.name, args) if isinstance(t, Cons) else Fun(t.name, args)
                return sub, rebuilt
    return None


def extended_step(s: State, program: Program, fresh: FreshNames) -> list[ExtStep]:
    """All successors of a state, one entry per applicable rule alternative."""
    e = s.expr
    if isinstance(e, Case):
        arg = e.arg
        if isinstance(arg, Cons) and not is_top(arg):
            nxt = _select_branch(e, arg)
            return [ExtStep("select", State(nxt, s.stack))] if nxt is not None else []
        if isinstance(arg, Var):
            # rigid cases are explored as if flexible: reachability must not
            # miss alternatives hidden behind suspensions
            return [ExtStep("guess", State(b, s.stack)) for b in _guess_branches(e)]
        return []
    if isinstance(e, Fun):
        flattened = split_demanded(e, s.stack, program, fresh)
        if flattened is not None:
            return [ExtStep("flatten", flattened)]
        rule = program.lookup(e.name)
        if rule is None:
            return []
        return [ExtStep("fun", State(instantiate(rule, e.args, fresh), s.stack))]
    if is_value(e) and s.stack:
        top, rest = s.stack[0], s.stack[1:]
        plugged = Subst({top.hole: e}).apply(top.ctx)
        return [ExtStep("replace", State(plugged, rest))]
    return []


def unfold_state(s: State, program: Program,
                 fresh: FreshNames) -> tuple[list[State], set[str]]:
    """Complete one-step unfolding: one fun step, then the select/guess closure.

    Returns the select/guess normal forms (stack unchanged) plus the set of
    function names found undefined (deleted-code boundaries, for diagnostics).
    Stuck cases (no matching branch, or an argument reduced to TOP) end dead
    derivations and contribute no state. A state that is not flatten-normal
    (possible after msg generalization) is flattened first; only then do its
    results carry an extended stack.
    """
    boundaries: set[str] = set()
    # lazy re-flattening: generalized states may demand an inner call again
    while isinstance(s.expr, Fun):
        flattened = split_demanded(s.expr, s.stack, program, fresh)
        if flattened is None:
            break
        s = flattened
    if not isinstance(s.expr, Fun):
        return [], boundaries
    rule = program.lookup(s.expr.name)
    if rule is None:
        boundaries.add(s.expr.name)
        return [], boundaries
    body = instantiate(rule, s.expr.args, fresh)

    results: list[State] = []

    def closure(e: Term) -> None:
        if not isinstance(e, Case):
            results.append(State(e, s.stack))
            return
        arg = e.arg
        if isinstance(arg, Fun):
            # unreachable on flatten-normal input: such a derivation would
            # have made split_demanded succeed
            raise AssertionError("demanded inner call surfaced during unfolding")
        if isinstance(arg, Cons):
            if is_top(arg):
                boundaries.add("TOP")
                return
            nxt = _select_branch(e, arg)
            if nxt is not None:
                closure(nxt)
            return
        assert isinstance(arg, Var)
        for alt in _guess_branches(e):
            closure(alt)

    closure(body)
    return results, boundaries


def to_flattened(s: State, program: Program, fresh: FreshNames) -> State:
    """Normal form under replace and flatten.

    The result is a flattened state: either a value with an empty stack or an
    operation-rooted first component that demands no inner call.
    """
    while True:
        e = s.expr
        if is_value(e) and s.stack:
            top, rest = s.stack[0], s.stack[1:]
            s = State(Subst({top.hole: e}).apply(top.ctx), rest)
            continue
        if isinstance(e, Fun):
            flattened = split_demanded(e, s.stack, program, fresh)
            if flattened is not None:
                s = flattened
                continue
        return s
