"""Concrete syntax for flat programs, goals, and slices.

Grammar sketch (LL(1), `--` comments, UTF-8):

    program  := { rule }
    rule     := funident "(" [ ident { "," ident } ] ")" "=" expr
    expr     := caseexpr | term
    caseexpr := ("case" | "fcase") term "of" "{" [ branch { ";" branch } ] "}"
    branch   := pattern "->" expr
    pattern  := consident [ "(" ident { "," ident } ")" ]
    term     := ident                          -- variable
              | consident [ "(" terms ")" ]    -- constructor call
              | funident "(" [ terms ] ")"     -- function call
              | "TOP"

Constructors start with an upper-case letter, variables and functions with a
lower-case one; a lower-case identifier followed by ``(`` is a function call.
``TOP`` (also accepted as ``⊤``) is the reserved deleted-code constructor.
Case arguments in rule bodies must be variables and cases may not appear
inside call arguments; both are reported as flatness errors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from .terms import (
    TOP_NAME,
    Branch,
    Case,
    Cons,
    Fun,
    Program,
    Rule,
    SourceSpan,
    State,
    Term,
    TOP,
    Var,
    format_term,
    is_op_rooted,
)


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    span: SourceSpan
    message: str

    def __str__(self) -> str:
        return f"{self.span.file}:{self.span.line}:{self.span.column}: {self.severity}: {self.message}"


class SurfaceError(Exception):
    """Raised when parsing or validation fails; carries all diagnostics."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


# ---------------------------------------------------------------------------
# lexer

_PUNCT = {
    "(": "LPAREN",
    ")": "RPAREN",
    "{": "LBRACE",
    "}": "RBRACE",
    ",": "COMMA",
    ";": "SEMI",
    "=": "EQ",
}

_KEYWORDS = {"case", "fcase", "of"}


@dataclass(frozen=True)
class Token:
    kind: str  # LOWER, UPPER, TOP, ARROW, keyword kinds, punctuation, EOF
    text: str
    line: int
    column: int


def _lex(text: str, filename: str) -> tuple[list[Token], list[Diagnostic]]:
    tokens: list[Token] = []
    diags: list[Diagnostic] = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if text.startswith("--", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        if text.startswith("->", i):
            tokens.append(Token("ARROW", "->", line, col))
            i += 2
            col += 2
            continue
        if ch in _PUNCT:
            tokens.append(Token(_PUNCT[ch], ch, line, col))
            i += 1
            col += 1
            continue
        if ch == "⊤":
            tokens.append(Token("TOP", TOP_NAME, line, col))
            i += 1
            col += 1
            continue
        if ch.isalpha():
            start = i
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
            word = text[start:i]
            if word == TOP_NAME:
                kind = "TOP"
            elif word in _KEYWORDS:
                kind = word.upper()
            elif word[0].isupper():
                kind = "UPPER"
            else:
                kind = "LOWER"
            tokens.append(Token(kind, word, line, col))
            col += len(word)
            continue
        diags.append(
            Diagnostic("error", SourceSpan(filename, line, col), f"unexpected character {ch!r}")
        )
        i += 1
        col += 1
    tokens.append(Token("EOF", "", line, col))
    return tokens, diags


# ---------------------------------------------------------------------------
# parser

class _Parser:
    def __init__(self, tokens: list[Token], filename: str):
        self.tokens = tokens
        self.pos = 0
        self.filename = filename
        self.diags: list[Diagnostic] = []

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def span(self, tok: Token) -> SourceSpan:
        return SourceSpan(self.filename, tok.line, tok.column)

    def error(self, tok: Token, message: str) -> None:
        self.diags.append(Diagnostic("error", self.span(tok), message))
        raise SurfaceError(self.diags)

    def expect(self, kind: str, what: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            self.error(tok, f"expected {what}, found {tok.text!r}" if tok.text else f"expected {what}")
        return self.next()

    # ---- terms -----------------------------------------------------------

    def parse_args(self) -> tuple[Term, ...]:
        self.expect("LPAREN", "'('")
        args: list[Term] = []
        if self.peek().kind != "RPAREN":
            args.append(self.parse_term())
            while self.peek().kind == "COMMA":
                self.next()
                args.append(self.parse_term())
        self.expect("RPAREN", "')'")
        return tuple(args)

    def parse_term(self) -> Term:
        tok = self.peek()
        if tok.kind in ("CASE", "FCASE"):
            self.error(tok, "case expression not allowed inside call arguments")
        if tok.kind == "TOP":
            self.next()
            return TOP
        if tok.kind == "UPPER":
            self.next()
            if self.peek().kind == "LPAREN":
                return Cons(tok.text, self.parse_args())
            return Cons(tok.text)
        if tok.kind == "LOWER":
            self.next()
            if self.peek().kind == "LPAREN":
                return Fun(tok.text, self.parse_args())
            return Var(tok.text)
        self.error(tok, "expected a term")
        raise AssertionError  # unreachable

    # ---- expressions -----------------------------------------------------

    def parse_expr(self) -> Term:
        tok = self.peek()
        if tok.kind in ("CASE", "FCASE"):
            return self.parse_case()
        return self.parse_term()

    def parse_case(self) -> Term:
        kw = self.next()
        flex = kw.kind == "FCASE"
        arg = self.parse_term()
        self.expect("OF", "'of'")
        self.expect("LBRACE", "'{'")
        branches: list[Branch] = []
        if self.peek().kind != "RBRACE":
            branches.append(self.parse_branch())
            while self.peek().kind == "SEMI":
                self.next()
                branches.append(self.parse_branch())
        self.expect("RBRACE", "'}'")
        return Case(flex, arg, tuple(branches), span=self.span(kw))

    def parse_branch(self) -> Branch:
        tok = self.peek()
        if tok.kind == "TOP":
            self.error(tok, "TOP cannot be used as a pattern")
        pat_tok = self.expect("UPPER", "a constructor pattern")
        pat_args: list[Var] = []
        if self.peek().kind == "LPAREN":
            self.next()
            v = self.expect("LOWER", "a pattern variable")
            pat_args.append(Var(v.text))
            while self.peek().kind == "COMMA":
                self.next()
                v = self.expect("LOWER", "a pattern variable")
                pat_args.append(Var(v.text))
            self.expect("RPAREN", "')'")
        self.expect("ARROW", "'->'")
        body = self.parse_expr()
        return Branch(Cons(pat_tok.text, tuple(pat_args)), body)

    # ---- rules -----------------------------------------------------------

    def parse_rule(self) -> Rule:
        name = self.expect("LOWER", "a function name")
        self.expect("LPAREN", "'('")
        params: list[str] = []
        if self.peek().kind != "RPAREN":
            p = self.expect("LOWER", "a parameter name")
            params.append(p.text)
            while self.peek().kind == "COMMA":
                self.next()
                p = self.expect("LOWER", "a parameter name")
                params.append(p.text)
        self.expect("RPAREN", "')'")
        self.expect("EQ", "'='")
        body = self.parse_expr()
        return Rule(name.text, tuple(params), body, span=self.span(name))

    def parse_program(self) -> list[Rule]:
        rules = []
        while self.peek().kind != "EOF":
            rules.append(self.parse_rule())
        return rules


# ---------------------------------------------------------------------------
# validation


def _validate(rules: list[Rule], filename: str) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    default = SourceSpan(filename, 1, 1)

    def err(span: Optional[SourceSpan], msg: str) -> None:
        diags.append(Diagnostic("error", span or default, msg))

    def warn(span: Optional[SourceSpan], msg: str) -> None:
        diags.append(Diagnostic("warning", span or default, msg))

    seen: dict[str, Rule] = {}
    for r in rules:
        if r.fname in seen:
            err(r.span, f"duplicate rule for function {r.fname}")
        seen[r.fname] = r

    arities: dict[str, int] = {r.fname: len(r.params) for r in rules}
    call_arities: dict[str, tuple[int, Optional[SourceSpan]]] = {}

    def walk(t: Term, scope: set[str], rule: Rule, outermost: bool) -> None:
        span = rule.span
        if isinstance(t, Var):
            if t.name not in scope:
                err(span, f"undefined variable {t.name} in the body of {rule.fname}")
            return
        if isinstance(t, Cons):
            if t.name == TOP_NAME and t.args:
                err(span, "TOP takes no arguments")
            for a in t.args:
                walk(a, scope, rule, False)
            return
        if isinstance(t, Fun):
            if t.name in arities:
                if len(t.args) != arities[t.name]:
                    err(
                        span,
                        f"call to {t.name} with {len(t.args)} arguments, "
                        f"but it is defined with {arities[t.name]}",
                    )
            else:
                prev = call_arities.get(t.name)
                if prev is None:
                    call_arities[t.name] = (len(t.args), span)
                    warn(span, f"call to undefined function {t.name} (treated as deleted code)")
                elif prev[0] != len(t.args):
                    err(span, f"inconsistent arities for undefined function {t.name}")
            for a in t.args:
                walk(a, scope, rule, False)
            return
        # case expression
        cspan = t.span or span
        if not outermost:
            err(cspan, "case expression not allowed inside call arguments")
        if not isinstance(t.arg, Var):
            err(cspan, "case argument must be a variable")
        else:
            walk(t.arg, scope, rule, False)
        pats = set()
        for br in t.branches:
            if br.pattern.name == TOP_NAME:
                err(cspan, "TOP cannot be used as a pattern")
            if br.pattern.name in pats:
                err(cspan, f"duplicate pattern constructor {br.pattern.name}")
            pats.add(br.pattern.name)
            names = [v.name for v in br.pattern.args if isinstance(v, Var)]
            if len(set(names)) != len(names):
                err(cspan, f"repeated variable in pattern {br.pattern.name}")
            walk(br.body, scope | set(names), rule, True)

    for r in rules:
        if len(set(r.params)) != len(r.params):
            err(r.span, f"parameters of {r.fname} are not pairwise distinct")
        walk(r.body, set(r.params), r, True)

    return diags


# ---------------------------------------------------------------------------
# public entry points


def parse_program(text: str, filename: str = "<input>") -> tuple[Optional[Program], list[Diagnostic]]:
    """Parse and validate a flat program.

    Returns the program (or None) together with all diagnostics; the program
    is None exactly when an error-severity diagnostic is present.
    """
    tokens, diags = _lex(text, filename)
    if any(d.severity == "error" for d in diags):
        return None, diags
    parser = _Parser(tokens, filename)
    try:
        rules = parser.parse_program()
    except SurfaceError as exc:
        return None, exc.diagnostics
    diags = parser.diags + _validate(rules, filename)
    if any(d.severity == "error" for d in diags):
        return None, diags
    return Program(rules), diags


def load_program(text: str, filename: str = "<input>") -> Program:
    """Parse a program, raising SurfaceError on any error diagnostic."""
    program, diags = parse_program(text, filename)
    if program is None:
        raise SurfaceError([d for d in diags if d.severity == "error"])
    return program


def parse_goal(text: str, filename: str = "<goal>") -> Term:
    """Parse an operation-rooted, case-free goal term."""
    tokens, diags = _lex(text, filename)
    if any(d.severity == "error" for d in diags):
        raise SurfaceError(diags)
    parser = _Parser(tokens, filename)
    term = parser.parse_term()
    tok = parser.peek()
    if tok.kind != "EOF":
        parser.error(tok, "trailing input after the goal")
    if not is_op_rooted(term):
        raise SurfaceError(
            [Diagnostic("error", SourceSpan(filename, 1, 1), "goal must be operation-rooted")]
        )
    return term


# ---------------------------------------------------------------------------
# printing


def _simplify_body(t: Term) -> Optional[Term]:
    """Drop `p -> TOP` branches; None means the whole body is TOP."""
    if isinstance(t, Case):
        kept = []
        for br in t.branches:
            body = _simplify_body(br.body)
            if body is not None:
                kept.append(Branch(br.pattern, body))
        return Case(t.flex, t.arg, tuple(kept))
    if isinstance(t, Cons):
        if t.name == TOP_NAME and not t.args:
            return None
        return t
    return t


def print_rule(r: Rule, unicode_top: bool = False) -> str:
    return f"{r.fname}({', '.join(r.params)}) = {format_term(r.body, unicode_top)}"


def print_program(p: Program, mode: str = "full", unicode_top: bool = False) -> str:
    """Render a program; ``simplified`` drops `p -> TOP` branches and
    `f(xs) = TOP` rules, ``full`` prints every branch and rule."""
    if mode not in ("full", "simplified"):
        raise ValueError(f"unknown print mode {mode!r}")
    lines = []
    for r in p.rules:
        body: Optional[Term] = r.body
        if mode == "simplified":
            body = _simplify_body(r.body)
            if body is None:
                continue
        lines.append(print_rule(Rule(r.fname, r.params, body), unicode_top))
    return "\n\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# JSON traces


def states_to_json(states: list[State]) -> list[dict]:
    out = []
    for s in states:
        out.append(
            {
                "expr": format_term(s.expr),
                "stack": [{"ctx": format_term(fr.ctx), "hole": fr.hole} for fr in s.stack],
            }
        )
    return out


def trace_to_json(trace) -> str:
    """Serialize a fixpoint trace: one entry per state set, final set last."""
    entries = []
    for i, (states, _unfolded) in enumerate(trace.iterations):
        entries.append({"index": i, "states": states_to_json(sorted(states, key=format_state_key))})
    entries.append(
        {
            "index": len(trace.iterations),
            "states": states_to_json(sorted(trace.final, key=format_state_key)),
        }
    )
    return json.dumps(entries, indent=2) + "\n"


def format_state_key(s: State) -> str:
    return format_term(s.expr) + "".join(f"|{format_term(fr.ctx)}" for fr in s.stack)
