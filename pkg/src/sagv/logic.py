"""Formula ASTs and the formula parser.

One shared tree serves every fragment (LTL without next, ATL*, 1ATL*,
PATL/PATL*, onlyATL*, the P operator).  `F`, `G` and `R` are normalized at
parse time:

    F p  ==  true U p
    G p  ==  !(true U !p)
    a R b == !(!a U !b)

The pretty-printer re-derives the sugar, so parse(pretty(ast)) == ast.

Concrete syntax (EBNF, also in the README):

    formula   = or_expr ;
    or_expr   = and_expr { "|" and_expr } ;
    and_expr  = until_expr { "&" until_expr } ;
    until_expr= unary { ("U" | "R") unary } ;          (* right assoc *)
    unary     = ("!" | "X" | "F" | "G") unary | primary ;
    primary   = "true" | "false" | atom | "(" formula ")" | coop | pop ;
    coop      = "<<" [agents] ">>" [ "only" ] [ bound ] until_expr ;
    pop       = "P" bound until_expr ;
    bound     = "[" ("<=" | "<" | ">" | ">=") number "]" ;
    atom      = ident | ident "=" value ;
    number    = int | int "/" int | decimal ;
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterator, Optional

from .errors import BoundOutOfRange, ParseError


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class TrueConst:
    def __str__(self):
        return "true"


TRUE = TrueConst()


@dataclass(frozen=True)
class VarAtom:
    """Equality constraint on one system variable (module layer)."""

    var: str
    value: str

    def __str__(self):
        return f"{self.var}={self.value}"


@dataclass(frozen=True)
class PropAtom:
    """Bare atomic proposition (iCGS layer, or a fresh labeling prop)."""

    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Not:
    sub: object


@dataclass(frozen=True)
class And:
    left: object
    right: object


@dataclass(frozen=True)
class Or:
    left: object
    right: object


@dataclass(frozen=True)
class Next:
    sub: object


@dataclass(frozen=True)
class Until:
    left: object
    right: object


class Flavor(str, Enum):
    STANDARD = "standard"
    ONLY = "only"
    PROB = "prob"


@dataclass(frozen=True)
class Coop:
    """Strategic modality; `bound` is (op, d) with op in {<=,<,>,>=}, or None."""

    coalition: tuple[str, ...]
    bound: Optional[tuple[str, Fraction]]
    path: object
    flavor: Flavor = Flavor.STANDARD


FALSE = Not(TRUE)


def F(sub):
    return Until(TRUE, sub)


def G(sub):
    return Not(Until(TRUE, Not(sub)))


def R(left, right):
    return Not(Until(Not(left), Not(right)))


# ---------------------------------------------------------------------------
# Tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<coopl><<)
  | (?P<coopr>>>)
  | (?P<cmp><=|>=|<|>)
  | (?P<num>\d+\.\d+|\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym>[()\[\],=!&|/])
    """,
    re.VERBOSE,
)

_RESERVED = {"U", "R", "F", "G", "X", "P", "true", "false", "only"}


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    out = []
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if not m:
            raise ParseError(f"unexpected character {text[i]!r}", column=i + 1)
        if m.lastgroup != "ws":
            out.append(_Tok(m.lastgroup, m.group(), i))
        i = m.end()
    out.append(_Tok("eof", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, message: str):
        raise ParseError(message, column=self.peek().pos + 1)

    def expect(self, text: str) -> _Tok:
        t = self.peek()
        if t.text != text:
            self.error(f"expected {text!r}, found {t.text or 'end of input'!r}")
        return self.next()

    # grammar -----------------------------------------------------------

    def formula(self):
        f = self.or_expr()
        if self.peek().kind != "eof":
            self.error(f"trailing input {self.peek().text!r}")
        return f

    def or_expr(self):
        f = self.and_expr()
        while self.peek().text == "|":
            self.next()
            f = Or(f, self.and_expr())
        return f

    def and_expr(self):
        f = self.until_expr()
        while self.peek().text == "&":
            self.next()
            f = And(f, self.until_expr())
        return f

    def until_expr(self):
        f = self.unary()
        t = self.peek()
        if t.kind == "ident" and t.text in ("U", "R"):
            op = self.next().text
            rhs = self.until_expr()
            return Until(f, rhs) if op == "U" else R(f, rhs)
        return f

    def unary(self):
        t = self.peek()
        if t.text == "!":
            self.next()
            return Not(self.unary())
        if t.kind == "ident" and t.text in ("X", "F", "G"):
            self.next()
            sub = self.unary()
            return {"X": Next, "F": F, "G": G}[t.text](sub)
        return self.primary()

    def primary(self):
        t = self.peek()
        if t.text == "(":
            self.next()
            f = self.or_expr()
            self.expect(")")
            return f
        if t.kind == "coopl":
            return self.coop()
        if t.kind == "ident":
            if t.text == "P":
                self.next()
                bound = self.bound()
                return Coop((), bound, self.until_expr(), Flavor.PROB)
            if t.text == "true":
                self.next()
                return TRUE
            if t.text == "false":
                self.next()
                return FALSE
            if t.text in _RESERVED:
                self.error(f"reserved word {t.text!r} cannot start a formula")
            return self.atom()
        self.error(f"unexpected {t.text or 'end of input'!r}")

    def atom(self):
        name = self.next().text
        if self.peek().text == "=":
            self.next()
            v = self.peek()
            if v.kind not in ("ident", "num"):
                self.error("expected a value after '='")
            self.next()
            return VarAtom(name, v.text)
        return PropAtom(name)

    def coop(self):
        self.expect("<<")
        agents = []
        while self.peek().kind in ("ident", "num") and self.peek().text not in ("only",):
            agents.append(self.next().text)
            if self.peek().text == ",":
                self.next()
            else:
                break
        self.expect(">>")
        flavor = Flavor.STANDARD
        if self.peek().text == "only":
            self.next()
            flavor = Flavor.ONLY
        bound = None
        if self.peek().text == "[":
            if flavor is Flavor.ONLY:
                self.error("onlyATL modalities are qualitative and take no bound")
            bound = self.bound()
        return Coop(tuple(sorted(set(agents))), bound, self.until_expr(), flavor)

    def bound(self) -> tuple[str, Fraction]:
        self.expect("[")
        op = self.peek()
        if op.kind != "cmp":
            self.error("expected one of <=, <, >, >=")
        self.next()
        d = self.number()
        self.expect("]")
        if not 0 <= d <= 1:
            raise BoundOutOfRange(f"probability bound {d} outside [0, 1]", column=op.pos + 1)
        return (op.text, d)

    def number(self) -> Fraction:
        t = self.peek()
        if t.kind != "num":
            self.error("expected a number")
        self.next()
        if self.peek().text == "/":
            self.next()
            den = self.peek()
            if den.kind != "num" or "." in den.text:
                self.error("expected an integer denominator")
            self.next()
            return Fraction(int(t.text), int(den.text))
        return Fraction(t.text)


def parse_formula(text: str):
    """Parse a state or path formula; raises ParseError with a position."""
    return _Parser(text).formula()


# ---------------------------------------------------------------------------
# Pretty-printing (inverse of parse on ASTs)

_PREC_OR, _PREC_AND, _PREC_UNTIL, _PREC_UNARY, _PREC_ATOM = range(5)


def _g_pattern(f):
    # !(true U !x)  ->  G x
    if isinstance(f, Not) and isinstance(f.sub, Until) and f.sub.left == TRUE:
        if isinstance(f.sub.right, Not):
            return f.sub.right.sub
    return None


def _r_pattern(f):
    # !(!a U !b)  ->  a R b
    if isinstance(f, Not) and isinstance(f.sub, Until):
        u = f.sub
        if isinstance(u.left, Not) and isinstance(u.right, Not):
            return (u.left.sub, u.right.sub)
    return None


def _fmt_bound(bound) -> str:
    op, d = bound
    return f"[{op}{d}]"


def pretty(f) -> str:
    return _pp(f, _PREC_OR)


def _pp(f, ctx: int) -> str:
    if f == FALSE:
        return "false"
    if isinstance(f, TrueConst):
        return "true"
    if isinstance(f, (VarAtom, PropAtom)):
        return str(f)
    g = _g_pattern(f)
    if g is not None:
        return _wrap(f"G {_pp(g, _PREC_UNARY)}", _PREC_UNARY, ctx)
    r = _r_pattern(f)
    if r is not None:
        return _wrap(f"{_pp(r[0], _PREC_UNARY)} R {_pp(r[1], _PREC_UNARY)}", _PREC_UNTIL, ctx)
    if isinstance(f, Not):
        return _wrap(f"!{_pp(f.sub, _PREC_ATOM)}", _PREC_UNARY, ctx)
    if isinstance(f, Until):
        if f.left == TRUE:
            return _wrap(f"F {_pp(f.right, _PREC_UNARY)}", _PREC_UNARY, ctx)
        return _wrap(f"{_pp(f.left, _PREC_UNARY)} U {_pp(f.right, _PREC_UNARY)}", _PREC_UNTIL, ctx)
    if isinstance(f, Next):
        return _wrap(f"X {_pp(f.sub, _PREC_UNARY)}", _PREC_UNARY, ctx)
    if isinstance(f, And):
        return _wrap(f"{_pp(f.left, _PREC_AND)} & {_pp(f.right, _PREC_AND)}", _PREC_AND, ctx)
    if isinstance(f, Or):
        return _wrap(f"{_pp(f.left, _PREC_OR)} | {_pp(f.right, _PREC_OR)}", _PREC_OR, ctx)
    if isinstance(f, Coop):
        body = _pp(f.path, _PREC_UNTIL)
        if f.flavor is Flavor.PROB:
            return _wrap(f"P{_fmt_bound(f.bound)} {body}", _PREC_UNARY, ctx)
        head = "<<" + ",".join(f.coalition) + ">>"
        if f.flavor is Flavor.ONLY:
            head += "only"
        if f.bound is not None:
            head += _fmt_bound(f.bound)
        return _wrap(f"{head} {body}", _PREC_UNARY, ctx)
    raise TypeError(f"not a formula node: {f!r}")


def _wrap(s: str, prec: int, ctx: int) -> str:
    return f"({s})" if prec < ctx else s


# ---------------------------------------------------------------------------
# Structural queries


def subformulas(f) -> Iterator:
    yield f
    if isinstance(f, Not):
        yield from subformulas(f.sub)
    elif isinstance(f, (And, Or, Until)):
        yield from subformulas(f.left)
        yield from subformulas(f.right)
    elif isinstance(f, Next):
        yield from subformulas(f.sub)
    elif isinstance(f, Coop):
        yield from subformulas(f.path)


def atom_nodes(f) -> frozenset:
    return frozenset(g for g in subformulas(f) if isinstance(g, (VarAtom, PropAtom)))


def atoms_of(f) -> frozenset[str]:
    """Names of the variables / propositions a formula refers to."""
    out = set()
    for g in subformulas(f):
        if isinstance(g, VarAtom):
            out.add(g.var)
        elif isinstance(g, PropAtom):
            out.add(g.name)
    return frozenset(out)


def local_to(f, module) -> bool:
    """True iff every atom of `f` is a valuation of the module's state variables."""
    for g in subformulas(f):
        if isinstance(g, PropAtom):
            return False
        if isinstance(g, VarAtom) and g.var not in module.state_vars:
            return False
    return True


def has_next(f) -> bool:
    return any(isinstance(g, Next) for g in subformulas(f))


def coop_nodes(f) -> list[Coop]:
    return [g for g in subformulas(f) if isinstance(g, Coop)]


def is_state_formula(f) -> bool:
    """No temporal operator outside a strategic modality."""
    if isinstance(f, (TrueConst, VarAtom, PropAtom, Coop)):
        return True
    if f == FALSE:
        return True
    if isinstance(f, Not):
        return is_state_formula(f.sub)
    if isinstance(f, (And, Or)):
        return is_state_formula(f.left) and is_state_formula(f.right)
    return False


def _vanilla_body(path) -> bool:
    """Single X/U/R/F/G step whose operands are state formulas."""
    g = _g_pattern(path)
    if g is not None:
        return is_state_formula(g)
    r = _r_pattern(path)
    if r is not None:
        return is_state_formula(r[0]) and is_state_formula(r[1])
    if isinstance(path, Next):
        return is_state_formula(path.sub)
    if isinstance(path, Until):
        return is_state_formula(path.left) and is_state_formula(path.right)
    return False


class FragmentTag(str, Enum):
    LTL_NO_X = "LTL_NO_X"
    ONE_ATL_STAR = "ONE_ATL_STAR"
    ATL_STAR = "ATL_STAR"
    PATL = "PATL"
    PATL_STAR = "PATL_STAR"
    ONLY_ATL = "ONLY_ATL"
    ONLY_ATL_STAR = "ONLY_ATL_STAR"
    PCTL_LIKE = "PCTL_LIKE"


def classify(f) -> FragmentTag:
    """Deterministic, total fragment classification.

    ATL_STAR doubles as the catch-all for standard-flavored formulas that fit
    no narrower tag (including bare path formulas that use X).
    """
    coops = coop_nodes(f)
    if not coops:
        return FragmentTag.ATL_STAR if has_next(f) else FragmentTag.LTL_NO_X
    if any(c.flavor is Flavor.ONLY for c in coops):
        if all(c.flavor is Flavor.ONLY and _vanilla_body(c.path) for c in coops):
            return FragmentTag.ONLY_ATL
        return FragmentTag.ONLY_ATL_STAR
    if any(c.bound is not None for c in coops):
        if all(c.flavor is Flavor.PROB for c in coops):
            return FragmentTag.PCTL_LIKE
        if all(c.bound is not None and _vanilla_body(c.path) for c in coops):
            return FragmentTag.PATL
        return FragmentTag.PATL_STAR
    if isinstance(f, Coop) and len(coops) == 1:
        return FragmentTag.ONE_ATL_STAR
    return FragmentTag.ATL_STAR
