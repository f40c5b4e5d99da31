"""Abstract syntax and term utilities for the flat functional-logic language.

Terms are immutable. A term is a variable, a constructor call, a function
call, or a case expression; the reserved nullary constructor ``TOP`` marks
deleted code in slices. Rule bodies obey the flatness discipline: case
arguments are variables and cases occur only outermost or directly inside
another case branch.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional, Union

# long demanded-evaluation chains substitute into deeply nested terms
sys.setrecursionlimit(max(sys.getrecursionlimit(), 20_000))

TOP_NAME = "TOP"


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Cons:
    name: str
    args: tuple["Term", ...] = ()


@dataclass(frozen=True)
class Fun:
    name: str
    args: tuple["Term", ...] = ()


@dataclass(frozen=True)
class Branch:
    pattern: Cons  # constructor applied to pairwise-distinct variables
    body: "Term"


@dataclass(frozen=True)
class Case:
    flex: bool
    arg: "Term"
    branches: tuple[Branch, ...]
    span: Optional["SourceSpan"] = field(default=None, compare=False)


Term = Union[Var, Cons, Fun, Case]

TOP = Cons(TOP_NAME)


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    column: int


def is_top(t: Term) -> bool:
    return isinstance(t, Cons) and t.name == TOP_NAME


def is_value(t: Term) -> bool:
    """Head normal form: a variable or a constructor-rooted term."""
    return isinstance(t, (Var, Cons))


def is_op_rooted(t: Term) -> bool:
    return isinstance(t, Fun)


def is_case_free(t: Term) -> bool:
    if isinstance(t, Var):
        return True
    if isinstance(t, (Cons, Fun)):
        return all(is_case_free(a) for a in t.args)
    return False


def is_pattern(t: Term) -> bool:
    """Constructor applied to pairwise-distinct variables."""
    if not isinstance(t, Cons):
        return False
    names = [a.name for a in t.args if isinstance(a, Var)]
    return len(names) == len(t.args) and len(set(names)) == len(names)


def subterms(t: Term) -> Iterator[Term]:
    yield t
    if isinstance(t, (Cons, Fun)):
        for a in t.args:
            yield from subterms(a)
    elif isinstance(t, Case):
        yield from subterms(t.arg)
        for br in t.branches:
            yield from subterms(br.body)


def term_vars(t: Term) -> list[str]:
    """Variable names in first-occurrence order, pattern binders included."""
    seen: list[str] = []

    def go(u: Term) -> None:
        if isinstance(u, Var):
            if u.name not in seen:
                seen.append(u.name)
        elif isinstance(u, (Cons, Fun)):
            for a in u.args:
                go(a)
        else:
            go(u.arg)
            for br in u.branches:
                go(br.pattern)
                go(br.body)

    go(t)
    return seen


def max_op_rooted(t: Term) -> list[Term]:
    """Maximal operation-rooted subterms, left to right."""
    if isinstance(t, Fun):
        return [t]
    if isinstance(t, Var):
        return []
    if isinstance(t, Cons):
        out: list[Term] = []
        for a in t.args:
            out.extend(max_op_rooted(a))
        return out
    out = max_op_rooted(t.arg)
    for br in t.branches:
        out.extend(max_op_rooted(br.body))
    return out


def depth(t: Term) -> int:
    """Maximum number of nested symbols; constants and variables have depth 1."""
    if isinstance(t, Var):
        return 1
    if isinstance(t, (Cons, Fun)):
        if not t.args:
            return 1
        return 1 + max(depth(a) for a in t.args)
    raise ValueError("depth is defined on case-free terms")


# ---------------------------------------------------------------------------
# substitutions


class Subst:
    """Finite mapping from variable names to terms.

    Identity bindings are never stored. Application is capture-safe with
    respect to case-pattern binders.
    """

    __slots__ = ("_map",)

    def __init__(self, mapping: Optional[dict[str, Term]] = None):
        m: dict[str, Term] = {}
        if mapping:
            for k, v in mapping.items():
                if not (isinstance(v, Var) and v.name == k):
                    m[k] = v
        self._map = m

    @staticmethod
    def identity() -> "Subst":
        return Subst()

    def __bool__(self) -> bool:
        return bool(self._map)

    def __contains__(self, name: str) -> bool:
        return name in self._map

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Subst) and self._map == other._map

    def __repr__(self) -> str:
        inner = ", ".join(f"{k} -> {format_term(v)}" for k, v in self.items())
        return "{" + inner + "}"

    def get(self, name: str) -> Term:
        return self._map.get(name, Var(name))

    def domain(self) -> set[str]:
        return set(self._map)

    def items(self) -> list[tuple[str, Term]]:
        return sorted(self._map.items())

    def apply(self, t: Term) -> Term:
        if not self._map:
            return t
        return self._apply(t, self._map)

    def _apply(self, t: Term, m: dict[str, Term]) -> Term:
        if isinstance(t, Var):
            return m.get(t.name, t)
        if isinstance(t, Cons):
            return Cons(t.name, tuple(self._apply(a, m) for a in t.args))
        if isinstance(t, Fun):
            return Fun(t.name, tuple(self._apply(a, m) for a in t.args))
        arg = self._apply(t.arg, m)
        branches = []
        for br in t.branches:
            bound = {a.name for a in br.pattern.args if isinstance(a, Var)}
            inner = {k: v for k, v in m.items() if k not in bound}
            body = self._apply(br.body, inner) if inner else br.body
            branches.append(Branch(br.pattern, body))
        return Case(t.flex, arg, tuple(branches))

    def compose(self, inner: "Subst") -> "Subst":
        """self . inner: apply inner first, then self."""
        m: dict[str, Term] = {}
        for k, v in inner._map.items():
            m[k] = self.apply(v)
        for k, v in self._map.items():
            if k not in inner._map:
                m[k] = v
        return Subst(m)

    def override(self, updates: dict[str, Term]) -> "Subst":
        """Replace bindings without touching existing ranges (binder entry)."""
        m = dict(self._map)
        for k, v in updates.items():
            if isinstance(v, Var) and v.name == k:
                m.pop(k, None)
            else:
                m[k] = v
        return Subst(m)

    def without(self, names: Iterable[str]) -> "Subst":
        drop = set(names)
        return Subst({k: v for k, v in self._map.items() if k not in drop})

    def restrict(self, names: Iterable[str]) -> "Subst":
        keep = set(names)
        return Subst({k: v for k, v in self._map.items() if k in keep})


def match(pattern: Term, subject: Term) -> Optional[Subst]:
    """One-sided matching: a substitution s with s(pattern) == subject."""
    binding: dict[str, Term] = {}

    def go(p: Term, s: Term) -> bool:
        if isinstance(p, Var):
            if p.name in binding:
                return binding[p.name] == s
            binding[p.name] = s
            return True
        if isinstance(p, Cons) and isinstance(s, Cons):
            pass
        elif isinstance(p, Fun) and isinstance(s, Fun):
            pass
        else:
            return False
        if p.name != s.name or len(p.args) != len(s.args):
            return False
        return all(go(a, b) for a, b in zip(p.args, s.args))

    if go(pattern, subject):
        return Subst(binding)
    return None


# ---------------------------------------------------------------------------
# fresh names and rule variants

FRESH_PREFIX = "_g"


class FreshNames:
    """Session-local source of fresh variable names.

    User identifiers may not start with an underscore, so generated names
    can never collide with program text.
    """

    __slots__ = ("_next",)

    def __init__(self, start: int = 0):
        self._next = start

    def __call__(self) -> str:
        name = f"{FRESH_PREFIX}{self._next}"
        self._next += 1
        return name


def rename_bound(t: Term, mapping: dict[str, str], fresh: Callable[[], str]) -> Term:
    """Rename per ``mapping``, giving every case-pattern binder a fresh name."""
    if isinstance(t, Var):
        return Var(mapping.get(t.name, t.name))
    if isinstance(t, Cons):
        return Cons(t.name, tuple(rename_bound(a, mapping, fresh) for a in t.args))
    if isinstance(t, Fun):
        return Fun(t.name, tuple(rename_bound(a, mapping, fresh) for a in t.args))
    arg = rename_bound(t.arg, mapping, fresh)
    branches = []
    for br in t.branches:
        inner = dict(mapping)
        pat_args = []
        for v in br.pattern.args:
            assert isinstance(v, Var)
            nv = fresh()
            inner[v.name] = nv
            pat_args.append(Var(nv))
        branches.append(
            Branch(Cons(br.pattern.name, tuple(pat_args)), rename_bound(br.body, inner, fresh))
        )
    return Case(t.flex, arg, tuple(branches))


# ---------------------------------------------------------------------------
# rules and programs


@dataclass(frozen=True)
class Rule:
    fname: str
    params: tuple[str, ...]
    body: Term
    span: Optional[SourceSpan] = field(default=None, compare=False)


class Program:
    """Ordered single-rule function definitions; at most one rule per name."""

    def __init__(self, rules: Iterable[Rule]):
        self.rules: tuple[Rule, ...] = tuple(rules)
        self._by_name: dict[str, Rule] = {}
        for r in self.rules:
            if r.fname in self._by_name:
                raise ValueError(f"duplicate rule for function {r.fname}")
            self._by_name[r.fname] = r

    def lookup(self, fname: str) -> Optional[Rule]:
        return self._by_name.get(fname)

    def function_names(self) -> list[str]:
        return [r.fname for r in self.rules]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Program) and self.rules == other.rules

    def __repr__(self) -> str:
        return f"Program({len(self.rules)} rules)"


def instantiate(rule: Rule, args: tuple[Term, ...], fresh: Callable[[], str]) -> Term:
    """Unfold a rule with a fresh variant of its body, params bound to args."""
    if len(args) != len(rule.params):
        raise ValueError(
            f"{rule.fname} expects {len(rule.params)} arguments, got {len(args)}"
        )
    mapping = {p: fresh() for p in rule.params}
    body = rename_bound(rule.body, mapping, fresh)
    return Subst({mapping[p]: a for p, a in zip(rule.params, args)}).apply(body)


# ---------------------------------------------------------------------------
# stacks and states


@dataclass(frozen=True)
class Frame:
    ctx: Term  # operation-rooted, case-free, exactly one hole occurrence
    hole: str


Stack = tuple[Frame, ...]


@dataclass(frozen=True)
class State:
    expr: Term
    stack: Stack = ()


def stack_apply(t: Term, stack: Stack) -> Term:
    """Plug a term into its evaluation context, innermost frame first."""
    out = t
    for fr in stack:
        out = Subst({fr.hole: out}).apply(fr.ctx)
    return out


# ---------------------------------------------------------------------------
# printing (canonical, shared with the surface syntax)


def format_term(t: Term, unicode_top: bool = False) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Cons):
        if t.name == TOP_NAME and not t.args:
            return "⊤" if unicode_top else TOP_NAME
        if not t.args:
            return t.name
        return f"{t.name}({', '.join(format_term(a, unicode_top) for a in t.args)})"
    if isinstance(t, Fun):
        return f"{t.name}({', '.join(format_term(a, unicode_top) for a in t.args)})"
    kw = "fcase" if t.flex else "case"
    if not t.branches:
        return f"{kw} {format_term(t.arg, unicode_top)} of {{ }}"
    brs = "; ".join(
        f"{format_term(br.pattern, unicode_top)} -> {format_term(br.body, unicode_top)}"
        for br in t.branches
    )
    return f"{kw} {format_term(t.arg, unicode_top)} of {{ {brs} }}"


def format_state(s: State) -> str:
    frames = ", ".join(f"({format_term(fr.ctx)}, {fr.hole})" for fr in s.stack)
    return f"<{format_term(s.expr)}, [{frames}]>"


# ---------------------------------------------------------------------------
# canonical renaming and renaming-equivalence


class _Canon:
    def __init__(self) -> None:
        self.mapping: dict[str, str] = {}

    def name(self, v: str) -> str:
        if v not in self.mapping:
            self.mapping[v] = f"v{len(self.mapping)}"
        return self.mapping[v]

    def term(self, t: Term) -> Term:
        if isinstance(t, Var):
            return Var(self.name(t.name))
        if isinstance(t, Cons):
            return Cons(t.name, tuple(self.term(a) for a in t.args))
        if isinstance(t, Fun):
            return Fun(t.name, tuple(self.term(a) for a in t.args))
        arg = self.term(t.arg)
        branches = tuple(
            Branch(self.term(br.pattern), self.term(br.body)) for br in t.branches
        )
        return Case(t.flex, arg, branches)


def canon_term(t: Term) -> Term:
    """Rename variables to v0, v1, ... in traversal order."""
    return _Canon().term(t)


def canon_state(s: State) -> State:
    c = _Canon()
    expr = c.term(s.expr)
    stack = tuple(Frame(c.term(fr.ctx), c.name(fr.hole)) for fr in s.stack)
    return State(expr, stack)


def state_key(s: State) -> str:
    return format_state(canon_state(s))


def term_key(t: Term) -> str:
    return format_term(canon_term(t))


def renaming_equal(a: Term, b: Term) -> bool:
    return canon_term(a) == canon_term(b)


# ---------------------------------------------------------------------------
# most specific generalization


def msg(t1: Term, t2: Term, fresh: Callable[[], str]) -> tuple[Term, Subst, Subst]:
    """Anti-unification of two case-free terms.

    Returns (g, s1, s2) with s1(g) == t1 and s2(g) == t2; repeated
    disagreement pairs share one generalization variable.
    """
    table: dict[tuple[Term, Term], Var] = {}

    def go(a: Term, b: Term) -> Term:
        if a == b:
            return a
        if (
            isinstance(a, Cons)
            and isinstance(b, Cons)
            and a.name == b.name
            and len(a.args) == len(b.args)
        ):
            return Cons(a.name, tuple(go(x, y) for x, y in zip(a.args, b.args)))
        if (
            isinstance(a, Fun)
            and isinstance(b, Fun)
            and a.name == b.name
            and len(a.args) == len(b.args)
        ):
            return Fun(a.name, tuple(go(x, y) for x, y in zip(a.args, b.args)))
        key = (a, b)
        if key not in table:
            table[key] = Var(fresh())
        return table[key]

    gen = go(t1, t2)
    s1 = Subst({v.name: a for (a, _), v in table.items()})
    s2 = Subst({v.name: b for (_, b), v in table.items()})
    return gen, s1, s2


# ---------------------------------------------------------------------------
# closedness


def is_closed(e: Term, covers: Iterable[Term]) -> bool:
    """Closedness of an expression w.r.t. a set of operation-rooted terms.

    An operation-rooted expression must be an instance of a cover with
    recursively closed bindings; variables are closed, constructor calls and
    cases are closed when their components are.
    """
    cover_list = list(covers)

    def go(u: Term) -> bool:
        if isinstance(u, Var):
            return True
        if isinstance(u, Cons):
            return all(go(a) for a in u.args)
        if isinstance(u, Case):
            return go(u.arg) and all(go(br.body) for br in u.branches)
        for c in cover_list:
            s = match(c, u)
            if s is not None and all(go(v) for _, v in s.items()):
                return True
        return False

    return go(e)


# ---------------------------------------------------------------------------
# the abstraction relation (slices)


def term_abstracts(sliced: Term, orig: Term, var_map: Optional[dict[str, str]] = None) -> bool:
    """Whether ``sliced`` is ``orig`` with some subtrees replaced by TOP.

    ``var_map`` carries the binder correspondence; case skeletons must agree
    branch-for-branch except that the slice may omit trailing behaviour by
    mapping a branch body to TOP. Omitted case branches are accepted as if
    written ``pattern -> TOP``.
    """
    vm = {} if var_map is None else var_map

    def go(a: Term, b: Term) -> bool:
        if is_top(a):
            return True
        if isinstance(a, Var) and isinstance(b, Var):
            return vm.get(a.name, a.name) == b.name
        if isinstance(a, Cons) and isinstance(b, Cons):
            return (
                a.name == b.name
                and len(a.args) == len(b.args)
                and all(go(x, y) for x, y in zip(a.args, b.args))
            )
        if isinstance(a, Fun) and isinstance(b, Fun):
            return (
                a.name == b.name
                and len(a.args) == len(b.args)
                and all(go(x, y) for x, y in zip(a.args, b.args))
            )
        if isinstance(a, Case) and isinstance(b, Case):
            if a.flex != b.flex or not go(a.arg, b.arg):
                return False
            by_name = {br.pattern.name: br for br in b.branches}
            seen = set()
            for br in a.branches:
                ob = by_name.get(br.pattern.name)
                if ob is None or br.pattern.name in seen:
                    return False
                seen.add(br.pattern.name)
                if len(br.pattern.args) != len(ob.pattern.args):
                    return False
                saved = dict(vm)
                for pv, ov in zip(br.pattern.args, ob.pattern.args):
                    assert isinstance(pv, Var) and isinstance(ov, Var)
                    vm[pv.name] = ov.name
                ok = go(br.body, ob.body)
                vm.clear()
                vm.update(saved)
                if not ok:
                    return False
            return True
        return False

    return go(sliced, orig)


def abstraction_violations(sliced: "Program", orig: "Program") -> list[str]:
    """Check the program-level abstraction relation; empty result means it holds.

    Rules absent from the slice stand for ``f(xs) = TOP``; branches absent
    from a retained case stand for ``p -> TOP``.
    """
    out: list[str] = []
    for r in sliced.rules:
        o = orig.lookup(r.fname)
        if o is None:
            out.append(f"function {r.fname} is not defined in the original program")
            continue
        if len(r.params) != len(o.params):
            out.append(
                f"function {r.fname} has arity {len(r.params)} in the slice "
                f"but {len(o.params)} in the original"
            )
            continue
        vm = dict(zip(r.params, o.params))
        if not term_abstracts(r.body, o.body, vm):
            out.append(f"body of {r.fname} is not an abstraction of the original body")
    return out


def abstraction_holds(sliced: "Program", orig: "Program") -> bool:
    return not abstraction_violations(sliced, orig)
