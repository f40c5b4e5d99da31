"""Core term utilities: substitution, msg, closedness, abstraction, stacks."""

import random

import pytest
from hypothesis import given, settings, strategies as st

from flslice.surface import load_program, parse_goal
from flslice.terms import (
    Branch,
    Case,
    Cons,
    FreshNames,
    Frame,
    Fun,
    Program,
    Rule,
    State,
    Subst,
    TOP,
    Var,
    abstraction_holds,
    abstraction_violations,
    canon_term,
    depth,
    is_closed,
    match,
    msg,
    renaming_equal,
    stack_apply,
    term_key,
)


def T(text):
    return parse_goal(text) if "(" in text and text[0].islower() else _term(text)


def _term(text):
    # tiny helper for constructor/variable literals in tests
    from flslice.surface import _lex, _Parser

    tokens, diags = _lex(text, "<test>")
    assert not diags
    return _Parser(tokens, "<test>").parse_term()


# ---------------------------------------------------------------------------
# substitution


def test_apply_no_select_inside_case():
    body = _term("y")
    case = Case(
        True,
        Var("y"),
        (
            Branch(Cons("Z"), Cons("False")),
            Branch(Cons("Succ", (Var("m"),)), Fun("leq", (Var("x"), Var("m")))),
        ),
    )
    out = Subst({"y": Cons("Z")}).apply(case)
    assert out == Case(
        True,
        Cons("Z"),
        (
            Branch(Cons("Z"), Cons("False")),
            Branch(Cons("Succ", (Var("m"),)), Fun("leq", (Var("x"), Var("m")))),
        ),
    )


def test_apply_identity():
    t = _term("Succ(plus(x, y))")
    assert Subst().apply(t) == t


def test_apply_nested():
    t = _term("Succ(plus(x, y))")
    out = Subst({"x": Cons("Succ", (Var("y1"),))}).apply(t)
    assert out == _term("Succ(plus(Succ(y1), y))")


def test_apply_respects_pattern_binders():
    # the inner pattern rebinds x: occurrences in that branch must not change
    case = Case(
        True,
        Var("z"),
        (Branch(Cons("C", (Var("x"),)), Var("x")), Branch(Cons("A"), Var("x"))),
    )
    out = Subst({"x": Cons("B")}).apply(case)
    assert isinstance(out, Case)
    assert out.branches[0].body == Var("x")  # shadowed
    assert out.branches[1].body == Cons("B")  # free occurrence


def test_compose_applies_inner_first():
    s1 = Subst({"x": Cons("Succ", (Var("n"),))})
    s2 = Subst({"n": Cons("Zero")})
    composed = s2.compose(s1)
    assert composed.apply(Var("x")) == _term("Succ(Zero)")


# ---------------------------------------------------------------------------
# msg


def test_msg_paper_example():
    t1 = _term("fst(Pair(a, b))")
    t2 = _term("fst(z)")
    gen, s1, s2 = msg(t1, t2, FreshNames())
    assert isinstance(gen, Fun) and gen.name == "fst"
    w = gen.args[0]
    assert isinstance(w, Var)
    assert s1.get(w.name) == _term("Pair(a, b)")
    assert s2.get(w.name) == Var("z")


def test_msg_identity():
    t = _term("len(Cons(y, ys))")
    gen, s1, s2 = msg(t, t, FreshNames())
    assert gen == t and not s1 and not s2


def test_msg_hand_example():
    gen, s1, s2 = msg(_term("len(Cons(y, ys))"), _term("len(xs)"), FreshNames())
    assert renaming_equal(gen, _term("len(v)"))
    v = gen.args[0].name
    assert s1.get(v) == _term("Cons(y, ys)")
    assert s2.get(v) == Var("xs")


def test_msg_shared_disagreements():
    gen, s1, s2 = msg(_term("p(a, a)"), _term("p(B, B)"), FreshNames())
    assert isinstance(gen, Fun)
    assert gen.args[0] == gen.args[1]  # one shared generalization variable


# random case-free terms for property tests
_names = st.sampled_from(["x", "y", "z", "w"])
_cnames = st.sampled_from(["A", "B", "C", "D"])
_fnames = st.sampled_from(["f", "g"])


def _terms(depth_limit=4):
    return st.recursive(
        st.builds(Var, _names) | st.builds(lambda n: Cons(n), _cnames),
        lambda sub: st.builds(lambda n, a: Cons(n, tuple(a)), _cnames, st.lists(sub, max_size=2))
        | st.builds(lambda n, a: Fun(n, tuple(a)), _fnames, st.lists(sub, max_size=2)),
        max_leaves=8,
    )


@given(_terms(), _terms())
@settings(max_examples=200)
def test_msg_soundness(t1, t2):
    gen, s1, s2 = msg(t1, t2, FreshNames())
    assert s1.apply(gen) == t1
    assert s2.apply(gen) == t2


@given(_terms(), _terms())
@settings(max_examples=200)
def test_msg_minimality_bounds(t1, t2):
    gen, _, _ = msg(t1, t2, FreshNames())
    # the inputs are instances of gen, and gen is an instance of a fresh var
    assert match(gen, t1) is not None
    assert match(gen, t2) is not None
    assert match(Var("_any"), gen) is not None
    if not renaming_equal(gen, t1):
        assert depth(gen) <= depth(t1)


# ---------------------------------------------------------------------------
# closedness


def test_closed_instance():
    assert is_closed(_term("len(Cons(y, ys))"), [_term("len(xs)")])


def test_closed_variable():
    assert is_closed(Var("x"), [])


def test_not_closed():
    assert not is_closed(_term("fst(z)"), [_term("fst(Pair(a, b))")])


def test_closed_recursive_bindings():
    # the matched binding itself must be covered
    e = _term("f(g(A))")
    assert not is_closed(e, [_term("f(x)")])
    assert is_closed(e, [_term("f(x)"), _term("g(y)")])


@given(st.data())
@settings(max_examples=100)
def test_closedness_transitive(data):
    t = data.draw(_terms())
    e1 = data.draw(st.lists(_terms(), min_size=1, max_size=3))
    e1 = [u for u in e1 if isinstance(u, Fun)] or [Fun("f", (Var("x"),))]
    e2 = [Fun(u.name, tuple(Var(f"k{i}") for i in range(len(u.args)))) for i, u in enumerate(e1)]
    if is_closed(t, e1) and all(is_closed(u, e2) for u in e1):
        assert is_closed(t, e2)


# ---------------------------------------------------------------------------
# abstraction


LENMAX = open("corpus/lenmax.flc").read()
LENMAX_SLICE = open("corpus/lenmax.expected-slice.flc").read()


def test_abstraction_lenmax_slice():
    orig = load_program(LENMAX)
    sliced = load_program(LENMAX_SLICE)
    assert abstraction_holds(sliced, orig)


def test_abstraction_reflexive():
    p = load_program(LENMAX)
    assert abstraction_holds(p, p)


def test_abstraction_detects_changed_leaf():
    orig = load_program("len(xs) = fcase xs of { Nil -> Zero; Cons(x, r) -> Succ(len(r)) }")
    changed = load_program(
        "len(xs) = fcase xs of { Nil -> Succ(Zero); Cons(x, r) -> Succ(len(r)) }"
    )
    assert not abstraction_holds(changed, orig)
    assert abstraction_violations(changed, orig)


def test_abstraction_top_covers_everything():
    orig = load_program("f(x) = fcase x of { A -> g(x) }\ng(y) = B")
    sliced = load_program("f(x) = TOP")
    assert abstraction_holds(sliced, orig)


def test_abstraction_missing_branch_reads_as_top():
    orig = load_program("f(x) = fcase x of { A -> B; B -> A }")
    sliced = load_program("f(x) = fcase x of { A -> B }")
    assert abstraction_holds(sliced, orig)
    # but an extra branch is a violation
    assert not abstraction_holds(orig, sliced)


def test_abstraction_arity_mismatch_reported():
    orig = load_program("f(x) = A")
    sliced = load_program("f(x, y) = A")
    out = abstraction_violations(sliced, orig)
    assert out and "arity" in out[0]


def test_abstraction_unknown_function_reported():
    orig = load_program("f(x) = A")
    sliced = load_program("h(x) = A")
    out = abstraction_violations(sliced, orig)
    assert out and "not defined" in out[0]


# ---------------------------------------------------------------------------
# stacks and depth


def test_stack_apply_paper_example():
    stack = (
        Frame(_term("len(x2)"), "x2"),
        Frame(_term("fst(Pair(x1, snd(z)))"), "x1"),
    )
    assert stack_apply(Var("y"), stack) == _term("fst(Pair(len(y), snd(z)))")


def test_stack_apply_empty():
    t = _term("len(xs)")
    assert stack_apply(t, ()) == t


def test_stack_apply_single_frame():
    assert stack_apply(_term("len(xs)"), (Frame(_term("fst(x)"), "x"),)) == _term("fst(len(xs))")


def test_depth_examples():
    assert depth(_term("Zero")) == 1
    assert depth(_term("Succ(Zero)")) == 2
    assert depth(_term("fst(Pair(len(y), snd(z)))")) == 3 + 1  # fst > Pair > len > y


def test_depth_hand_count():
    # maximum number of nested symbols along any path
    assert depth(_term("f(Pair(A, g(B)))")) == 4


# ---------------------------------------------------------------------------
# canonical renaming


def test_canon_detects_renaming():
    assert renaming_equal(_term("plus(x, Succ(y))"), _term("plus(a, Succ(b))"))
    assert not renaming_equal(_term("plus(x, x)"), _term("plus(a, b)"))


def test_term_key_stable():
    assert term_key(_term("f(x, y)")) == term_key(_term("f(q, r)"))


@given(_terms())
@settings(max_examples=100)
def test_canon_idempotent(t):
    assert canon_term(canon_term(t)) == canon_term(t)


def test_abstraction_antisymmetric_on_random_slices():
    import random as _random

    from flslice.slicer import slice_program
    from genprog import ProgramGen
    from flslice.surface import print_program

    rng = _random.Random(31)
    for _ in range(40):
        gen = ProgramGen(rng)
        program = gen.program()
        sliced, _ = slice_program(program, gen.criterion(program))
        assert abstraction_holds(sliced, program)
        if abstraction_holds(program, sliced):
            # mutual abstraction forces syntactic equality up to renaming
            assert print_program(sliced, mode="full") == print_program(program, mode="full")
