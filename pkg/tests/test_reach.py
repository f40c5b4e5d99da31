"""Fixpoint machinery: calls, state msg, absorb/abstract, the full loop."""

import random

import pytest

from flslice.reach import (
    FuelExhausted,
    StateSet,
    abstract_states,
    absorb,
    msg_states,
    op_rooted_calls,
    reachable_states,
    state_closed,
)
from flslice.surface import load_program, parse_goal
from flslice.terms import (
    Cons,
    FreshNames,
    Frame,
    Fun,
    State,
    Subst,
    Var,
    state_key,
)

from genprog import ProgramGen

LENMAX = load_program(open("corpus/lenmax.flc").read())


def S(expr_text, *frames):
    stack = tuple(Frame(parse_goal(ctx), hole) for ctx, hole in frames)
    return State(parse_goal(expr_text), stack)


def keys(states):
    return {state_key(s) for s in states}


# ---------------------------------------------------------------------------
# calls


def test_calls_of_substitution():
    sub = Subst({"w": Cons("Pair", (parse_goal("len(xs)"), parse_goal("max(xs)")))})
    assert keys(State(t, ()) for t in op_rooted_calls(sub)) == keys([S("len(xs)"), S("max(xs)")])


def test_calls_of_identity():
    assert op_rooted_calls(Subst()) == []


def test_calls_of_stack_skips_the_context_itself():
    # the context exists to remember the delayed outer call; only argument
    # material counts
    assert op_rooted_calls((Frame(parse_goal("fst(x)"), "x"),)) == []


def test_calls_of_stack_collects_argument_calls():
    frames = (Frame(Fun("plus", (Var("h"), parse_goal("len(ys)"))), "h"),)
    assert [state_key(State(t, ())) for t in op_rooted_calls(frames)] == [
        state_key(S("len(ys)"))
    ]


# ---------------------------------------------------------------------------
# msg on states


def test_msg_states_paper_example():
    gen, extras = msg_states(S("fst(Pair(a, b))"), S("fst(z)"), FreshNames())
    assert isinstance(gen.expr, Fun) and gen.expr.name == "fst"
    assert isinstance(gen.expr.args[0], Var)
    assert gen.stack == () and extras == []


def test_msg_states_identical():
    s = S("len(xs)")
    gen, extras = msg_states(s, s, FreshNames())
    assert state_key(gen) == state_key(s) and extras == []


def test_msg_states_collects_substitution_calls():
    gen, extras = msg_states(S("f(len(xs))"), S("f(Zero)"), FreshNames())
    assert state_key(gen) == state_key(S("f(w)"))
    assert keys(extras) == keys([S("len(xs)")])


def test_msg_states_equal_stacks_kept():
    s1 = S("lenmax(xs)", ("fst(x)", "x"))
    s2 = S("lenmax(Cons(y, ys))", ("fst(q)", "q"))
    gen, extras = msg_states(s1, s2, FreshNames())
    assert gen.stack == s1.stack
    assert state_key(gen) == state_key(S("lenmax(v)", ("fst(x)", "x")))


def test_msg_states_mismatched_stacks_dropped_with_compensation():
    s1 = S("lenmax(xs)", ("fst(x)", "x"))
    s2 = S("lenmax(ys)", ("snd(q)", "q"))
    gen, extras = msg_states(s1, s2, FreshNames())
    assert gen.stack == ()
    # both consumer contexts survive as root states
    assert keys(extras) >= keys([S("fst(x)"), S("snd(q)")])


# ---------------------------------------------------------------------------
# absorb (the paper's three abs cases)


def make_set(*states):
    return StateSet(states)


def test_absorb_adds_unknown_function():
    current = make_set(S("len(xs)"), S("fst(Pair(a, b))"))
    out = absorb(current, S("max(xs)"), LENMAX, FreshNames())
    assert keys(out) == keys([S("len(xs)"), S("fst(Pair(a, b))"), S("max(xs)")])


def test_absorb_discards_covered_state():
    current = make_set(S("len(xs)"), S("fst(Pair(a, b))"))
    out = absorb(current, S("len(Cons(y, ys))"), LENMAX, FreshNames())
    assert keys(out) == keys(current)


def test_absorb_generalizes_conflicting_state():
    current = make_set(S("len(xs)"), S("fst(Pair(a, b))"))
    out = absorb(current, S("fst(z)"), LENMAX, FreshNames())
    assert keys(out) == keys([S("len(xs)"), S("fst(w)")])


def test_absorb_variable_and_constructor_cases():
    current = make_set(S("len(xs)"))
    assert keys(absorb(current, State(Var("x"), ()), LENMAX, FreshNames())) == keys(current)
    out = absorb(current, State(Cons("Succ", (parse_goal("len(ys)"),)), ()), LENMAX, FreshNames())
    assert keys(out) == keys(current)  # len(ys) is covered by len(xs)


def test_abstract_decomposes_constructor_result():
    out = abstract_states(StateSet(), [State(Cons("Succ", (parse_goal("len(xs)"),)), ())], LENMAX, FreshNames())
    assert keys(out) == keys([S("len(xs)")])


def test_abstract_empty_input_is_identity():
    current = make_set(S("len(xs)"))
    assert keys(abstract_states(current, [], LENMAX, FreshNames())) == keys(current)


def test_abstract_lenmax_iteration_one():
    s1 = make_set(S("main(Len, xs)"), S("lenmax(xs)", ("fst(x)", "x")))
    unfolded = [
        S("fst(lenmax(xs))"),
        State(Cons("Pair", (parse_goal("len(xs)"), parse_goal("max(xs)"))), (Frame(parse_goal("fst(x)"), "x"),)),
    ]
    out = abstract_states(s1, unfolded, LENMAX, FreshNames())
    assert keys(out) == keys(
        [S("main(Len, xs)"), S("lenmax(xs)", ("fst(x)", "x")), S("fst(Pair(len(xs), max(xs)))")]
    )


def test_stateset_enforces_monovariance():
    with pytest.raises(ValueError, match="second state"):
        StateSet([S("len(xs)"), S("len(Nil)")])


# ---------------------------------------------------------------------------
# the fixpoint loop on the worked example


EXPECTED_SETS = [
    [S("main(Len, xs)")],
    [S("main(Len, xs)"), S("lenmax(xs)", ("fst(h)", "h"))],
    [S("main(Len, xs)"), S("lenmax(xs)", ("fst(h)", "h")), S("fst(Pair(len(xs), max(xs)))")],
    [
        S("main(Len, xs)"),
        S("lenmax(xs)", ("fst(h)", "h")),
        S("fst(Pair(len(xs), max(xs)))"),
        S("len(xs)"),
    ],
]
EXPECTED_UNFOLDED = [
    [S("fst(lenmax(xs))")],
    [
        S("fst(lenmax(xs))"),
        State(Cons("Pair", (parse_goal("len(xs)"), parse_goal("max(xs)"))), (Frame(parse_goal("fst(h)"), "h"),)),
    ],
    [
        S("fst(lenmax(xs))"),
        State(Cons("Pair", (parse_goal("len(xs)"), parse_goal("max(xs)"))), (Frame(parse_goal("fst(h)"), "h"),)),
        S("len(xs)"),
    ],
    [
        S("fst(lenmax(xs))"),
        State(Cons("Pair", (parse_goal("len(xs)"), parse_goal("max(xs)"))), (Frame(parse_goal("fst(h)"), "h"),)),
        S("len(xs)"),
        State(Cons("Zero"), ()),
        State(Cons("Succ", (parse_goal("len(r)"),)), ()),
    ],
]


def test_lenmax_fixpoint_reproduces_worked_trace():
    states, trace = reachable_states(LENMAX, parse_goal("main(Len, xs)"))
    assert trace.fuel_used == 4
    assert len(trace.iterations) == 4
    for i, (got_states, got_unfolded) in enumerate(trace.iterations):
        assert keys(got_states) == keys(EXPECTED_SETS[i]), f"set {i}"
        assert keys(got_unfolded) == keys(EXPECTED_UNFOLDED[i]), f"unfolded {i}"
    assert keys(trace.final) == keys(EXPECTED_SETS[3])
    assert keys(states) == keys(EXPECTED_SETS[3])
    assert trace.criterion_closed


def test_single_rule_program_fixpoint():
    p = load_program("main(x) = Zero")
    states, trace = reachable_states(p, parse_goal("main(x)"))
    assert keys(states) == keys([S("main(x)")])
    assert trace.fuel_used == 1


def test_criterion_must_be_operation_rooted():
    with pytest.raises(ValueError, match="operation-rooted"):
        reachable_states(LENMAX, Cons("Succ", (Cons("Zero"),)))


def test_fuel_exhaustion_carries_trace():
    with pytest.raises(FuelExhausted) as exc:
        reachable_states(LENMAX, parse_goal("main(Len, xs)"), fuel=2)
    assert len(exc.value.trace.iterations) == 2


def test_undefined_function_boundary_recorded():
    p = load_program("f(x) = h(x)")
    states, trace = reachable_states(p, parse_goal("f(x)"))
    assert "h" in trace.stats.boundaries
    assert keys(states) == keys([S("f(x)"), S("h(x)")])


# ---------------------------------------------------------------------------
# invariants on random fixpoints


def test_random_fixpoints_invariants():
    rng = random.Random(23)
    for _ in range(40):
        gen = ProgramGen(rng)
        program = gen.program()
        criterion = gen.criterion(program)
        states, trace = reachable_states(program, criterion)
        # monovariance and state-count bound
        roots = [s.expr.name for s in states]
        assert len(roots) == len(set(roots))
        assert len(states) <= len(program.rules)
        # the criterion stays covered
        assert trace.criterion_closed
        # merges never increase the first-component depth
        for ev in trace.stats.merges:
            assert ev.new_depth <= ev.old_depth


def test_safety_lemma_on_lenmax_iterations():
    states, trace = reachable_states(LENMAX, parse_goal("main(Len, xs)"))
    fresh = FreshNames(10_000)
    for current, unfolded in trace.iterations:
        merged = abstract_states(StateSet(current), unfolded, LENMAX, fresh)
        for s in list(current) + list(unfolded):
            assert state_closed(s, merged)


def test_generalized_state_may_demand_again_end_to_end():
    # merging f(B, g(A)) with f(C(B), g(B)) yields f(w, g(w')) whose branch A
    # now demands the inner g call even though both inputs were flatten-normal;
    # unfolding must re-flatten lazily and the run must stay covered
    p = load_program(
        "main(s) = fcase s of { A -> f(B, g(A)); B -> f(C(s), g(B)) }\n"
        "f(x, y) = fcase x of { A -> fcase y of { C(w) -> w }; B -> Zero; C(v) -> Zero }\n"
        "g(z) = C(z)"
    )
    states, trace = reachable_states(p, parse_goal("main(s)"))
    assert trace.criterion_closed
    roots = {s.expr.name for s in states}
    assert roots >= {"main", "f"}
    fresh = FreshNames(700_000)
    for current, unfolded in trace.iterations:
        merged = abstract_states(StateSet(current), unfolded, p, fresh)
        for s in list(current) + list(unfolded):
            assert state_closed(s, merged)


def test_unfold_all_examples():
    from flslice.reach import unfold_all

    fresh = FreshNames()
    out = unfold_all([S("main(Len, xs)")], LENMAX, fresh)
    assert keys(out) == keys([S("fst(lenmax(xs))")])
    assert unfold_all([], LENMAX, fresh) == []
    s3 = [
        S("main(Len, xs)"),
        S("lenmax(xs)", ("fst(h)", "h")),
        S("fst(Pair(len(xs), max(xs)))"),
        S("len(xs)"),
    ]
    out3 = unfold_all(s3, LENMAX, fresh)
    assert keys(out3) >= keys([State(Cons("Zero"), ()), State(Cons("Succ", (parse_goal("len(r)"),)), ())])
