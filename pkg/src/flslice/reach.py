"""Reachable-program-point computation: the monovariant fixpoint.

Starting from the flattened slicing criterion, each iteration performs a
complete one-step unfolding of every state and absorbs the results back into
the set. The set keeps at most one state per root function; conflicting
states for the same function are merged by most specific generalization, and
the operation-rooted material discarded by a merge is re-absorbed as fresh
root states so that everything already covered stays covered. The loop stops
when the set is stable modulo variable renaming.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

from .extsem import split_demanded, to_flattened, unfold_state
from .terms import (
    Cons,
    FreshNames,
    Frame,
    Fun,
    Program,
    State,
    Subst,
    Term,
    Var,
    depth,
    is_closed,
    is_op_rooted,
    max_op_rooted,
    msg,
    stack_apply,
    state_key,
)


class StateSet:
    """Monovariant state set: at most one state per root function name."""

    def __init__(self, states: Iterable[State] = ()):
        self._by_fun: dict[str, State] = {}
        for s in states:
            self.put(s)

    def put(self, s: State) -> None:
        if not isinstance(s.expr, Fun):
            raise ValueError("state sets hold operation-rooted states only")
        name = s.expr.name
        if name in self._by_fun:
            raise ValueError(f"second state for function {name}")
        self._by_fun[name] = s

    def get(self, fname: str) -> Optional[State]:
        return self._by_fun.get(fname)

    def replace(self, fname: str, s: State) -> "StateSet":
        out = StateSet()
        for k, v in self._by_fun.items():
            out._by_fun[k] = s if k == fname else v
        if fname not in out._by_fun:
            out._by_fun[fname] = s
        return out

    def add(self, s: State) -> "StateSet":
        out = StateSet()
        out._by_fun = dict(self._by_fun)
        out.put(s)
        return out

    def states(self) -> list[State]:
        return [self._by_fun[k] for k in sorted(self._by_fun)]

    def __len__(self) -> int:
        return len(self._by_fun)

    def __iter__(self):
        return iter(self.states())

    def key(self) -> frozenset[str]:
        return frozenset(state_key(s) for s in self.states())

    def __repr__(self) -> str:
        from .terms import format_state

        return "{" + ", ".join(format_state(s) for s in self.states()) + "}"


# ---------------------------------------------------------------------------
# calls


def op_rooted_calls(source: Union[Subst, tuple[Frame, ...]]) -> list[Term]:
    """States-to-be for the maximal operation-rooted terms in a substitution
    range or in the argument positions of stack contexts.

    A frame context is itself operation-rooted but exists only to remember
    the delayed outer call; the hole variable marks the position being
    evaluated, so only the remaining argument material counts as calls.
    """
    out: list[Term] = []
    if isinstance(source, Subst):
        for _, t in source.items():
            out.extend(max_op_rooted(t))
    else:
        for fr in source:
            assert isinstance(fr.ctx, Fun)
            for a in fr.ctx.args:
                out.extend(max_op_rooted(a))
    return out


def _stack_context_calls(stack: tuple[Frame, ...]) -> list[Term]:
    """Contexts plus their argument calls: the compensation set used when a
    merge discards a stack (the hole variable stays as a plain free variable,
    generalizing the consumer call)."""
    out: list[Term] = []
    for fr in stack:
        out.append(fr.ctx)
        for a in fr.ctx.args:
            out.extend(max_op_rooted(a))
    return out


# ---------------------------------------------------------------------------
# state closedness


def covers_of(states: Iterable[State]) -> list[Term]:
    return [stack_apply(s.expr, s.stack) for s in states]


def state_closed(s: State, states: Iterable[State]) -> bool:
    """A state is closed when the term it represents is closed w.r.t. the
    terms represented by the set."""
    return is_closed(stack_apply(s.expr, s.stack), covers_of(states))


# ---------------------------------------------------------------------------
# msg on states


def _stack_shape_key(stack: tuple[Frame, ...]) -> str:
    return state_key(State(Var("_stackprobe"), stack))


def msg_states(s1: State, s2: State, fresh: FreshNames) -> tuple[State, list[State]]:
    """Merge two states rooted by the same function.

    The first components are generalized by msg. The stack of the first
    state is kept when both stacks have the same shape and the merged pair
    stays self-covering; otherwise both stacks are dropped and all their
    calls (contexts included) are returned for re-absorption, together with
    the calls in the matching substitutions. Keeping the paper's rule of
    always inheriting the first stack loses the second consumer's context,
    which makes slices of criteria with a free case selector unsound; see
    the design notes.
    """
    t1, t2 = s1.expr, s2.expr
    assert isinstance(t1, Fun) and isinstance(t2, Fun) and t1.name == t2.name
    gen_t, sub1, sub2 = msg(t1, t2, fresh)
    extra_terms = op_rooted_calls(sub1) + op_rooted_calls(sub2)
    if _stack_shape_key(s1.stack) == _stack_shape_key(s2.stack):
        gen = State(gen_t, s1.stack)
        extras = extra_terms + op_rooted_calls(s2.stack)
        covers = covers_of([gen]) + extras
        if is_closed(stack_apply(t1, s1.stack), covers) and is_closed(
            stack_apply(t2, s2.stack), covers
        ):
            return gen, [State(t, ()) for t in extras]
    gen = State(gen_t, ())
    extras = extra_terms + _stack_context_calls(s1.stack) + _stack_context_calls(s2.stack)
    return gen, [State(t, ()) for t in extras]


# ---------------------------------------------------------------------------
# absorb / abstract


@dataclass
class MergeEvent:
    fname: str
    old_depth: int
    new_depth: int


@dataclass
class ReachStats:
    merges: list[MergeEvent] = field(default_factory=list)
    boundaries: set[str] = field(default_factory=set)
    absorb_budget: int = 1_000_000  # anti-hang net; never reached in practice


def absorb(current: StateSet, s: State, program: Program, fresh: FreshNames,
           stats: Optional[ReachStats] = None) -> StateSet:
    """Add one flattened state to the set, preserving monovariance.

    Variables are dropped; constructor-rooted results decompose into their
    maximal operation-rooted subterms; an operation-rooted state is added
    as-is, discarded when already covered, or merged with the existing state
    for the same function.
    """
    if stats is not None:
        stats.absorb_budget -= 1
        if stats.absorb_budget <= 0:
            raise RuntimeError("state absorption did not terminate")
    e = s.expr
    if isinstance(e, Var):
        return current
    if isinstance(e, Cons):
        new = [State(t, ()) for t in max_op_rooted(e)]
        return abstract_states(current, new, program, fresh, stats)
    assert isinstance(e, Fun)
    existing = current.get(e.name)
    if existing is None:
        return current.add(s)
    if state_closed(s, current):
        return current
    gen, extras = msg_states(existing, s, fresh)
    if stats is not None:
        stats.merges.append(MergeEvent(e.name, depth(existing.expr), depth(gen.expr)))
    updated = current.replace(e.name, gen)
    return abstract_states(updated, extras, program, fresh, stats)


def abstract_states(current: StateSet, new_states: Iterable[State], program: Program,
                    fresh: FreshNames, stats: Optional[ReachStats] = None) -> StateSet:
    """Left-fold absorb over the flattened new states, in canonical order."""
    prepared = [to_flattened(s, program, fresh) for s in new_states]
    prepared.sort(key=_absorb_key)
    out = current
    for s in prepared:
        out = absorb(out, s, program, fresh, stats)
    return out


def _absorb_key(s: State) -> tuple[int, str, str]:
    e = s.expr
    if isinstance(e, Fun):
        return (0, e.name, state_key(s))
    if isinstance(e, Cons):
        return (1, e.name, state_key(s))
    return (2, "", state_key(s))


def unfold_all(states: Iterable[State], program: Program, fresh: FreshNames,
               stats: Optional[ReachStats] = None) -> list[State]:
    """Union of the complete one-step unfoldings of every member."""
    out: list[State] = []
    seen: set[str] = set()
    for s in states:
        results, bounds = unfold_state(s, program, fresh)
        if stats is not None:
            stats.boundaries.update(bounds)
        for r in results:
            k = state_key(r)
            if k not in seen:
                seen.add(k)
                out.append(r)
    return out


# ---------------------------------------------------------------------------
# the fixpoint loop


@dataclass
class FixpointTrace:
    iterations: list[tuple[list[State], list[State]]] = field(default_factory=list)
    final: list[State] = field(default_factory=list)
    fuel_used: int = 0
    criterion_closed: bool = False
    stats: ReachStats = field(default_factory=ReachStats)


class FuelExhausted(Exception):
    def __init__(self, trace: FixpointTrace):
        self.trace = trace
        super().__init__(f"no fixpoint after {trace.fuel_used} iterations")


def default_fuel(program: Program) -> int:
    return 10 * len(program.rules) + 100


def reachable_states(program: Program, criterion: Term,
                     fuel: Optional[int] = None,
                     fresh: Optional[FreshNames] = None) -> tuple[StateSet, FixpointTrace]:
    """Fixpoint of unfold/abstract from the flattened criterion.

    Termination is guaranteed by monovariance plus the non-increasing depth
    of merged states; the fuel bound turns an implementation bug into a loud
    error carrying the full trace.
    """
    if not is_op_rooted(criterion):
        raise ValueError("slicing criterion must be operation-rooted")
    if fuel is None:
        fuel = default_fuel(program)
    if fuel <= 0:
        raise ValueError("fuel must be positive")
    fresh = fresh or FreshNames()
    trace = FixpointTrace()
    stats = trace.stats

    start = _flatten_only(State(criterion, ()), program, fresh)
    current = StateSet([start])
    for i in range(fuel):
        trace.fuel_used = i + 1
        unfolded = unfold_all(current, program, fresh, stats)
        nxt = abstract_states(current, unfolded, program, fresh, stats)
        trace.iterations.append((current.states(), unfolded))
        if nxt.key() == current.key():
            trace.final = nxt.states()
            trace.criterion_closed = state_closed(State(criterion, ()), nxt)
            return nxt, trace
        current = nxt
    raise FuelExhausted(trace)


def _flatten_only(s: State, program: Program, fresh: FreshNames) -> State:
    """Initialization flattening: flatten steps only, no replace."""
    while isinstance(s.expr, Fun):
        nxt = split_demanded(s.expr, s.stack, program, fresh)
        if nxt is None:
            return s
        s = nxt
    return s

