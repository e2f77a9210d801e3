"""Terms, formulas and bisequents: construction, parsing, printing, substitution.

Terms are parameters (free individual constants), bound variables, and
definite descriptions ``ix.(body)``.  Formulas are built from predicate
atoms, existence atoms ``Et``, identities ``t = s``, and the connectives
``~ & -> A`` (negation, conjunction, implication, universal quantifier).
A bisequent is an ordered pair of two-sided sequents over multisets.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Iterator, Optional, Union


class NestedDescriptionError(ValueError):
    """A description term occurred inside another description's body."""


class OpenDescriptionError(ValueError):
    """A description body has free variables other than its own."""


class ParseError(ValueError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


# ---------------------------------------------------------------------------
# Terms


@dataclass(frozen=True)
class Term:
    def __str__(self) -> str:
        return fmt_term(self)


@dataclass(frozen=True)
class Param(Term):
    """Free individual variable (parameter)."""

    name: str


@dataclass(frozen=True)
class Var(Term):
    """Bound individual variable; only meaningful under a binder."""

    name: str


@dataclass(frozen=True)
class Description(Term):
    """Definite description ``ix.(body)``.

    The body may not contain another description, and its only free
    variable must be the description's own bound variable.
    """

    var: str
    body: "Formula"

    def __post_init__(self):
        if _contains_description(self.body):
            raise NestedDescriptionError(f"description inside ix.({self.body})")
        extra = free_vars(self.body) - {self.var}
        if extra:
            raise OpenDescriptionError(
                f"description body has free variables {sorted(extra)} besides {self.var!r}"
            )


# ---------------------------------------------------------------------------
# Formulas


@dataclass(frozen=True)
class Formula:
    def __str__(self) -> str:
        return fmt_formula(self)


@dataclass(frozen=True)
class Atom(Formula):
    """Predicate atom; propositional letters are 0-ary atoms."""

    pred: str
    args: tuple[Term, ...] = ()


@dataclass(frozen=True)
class Exists(Formula):
    """Existence atom ``Et`` for the unary predicate E."""

    arg: Term


@dataclass(frozen=True)
class Identity(Formula):
    left: Term
    right: Term


@dataclass(frozen=True)
class Not(Formula):
    sub: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Forall(Formula):
    var: str
    body: Formula


ATOMIC_CLASSES = (Atom, Exists, Identity)


def is_atomic(phi: Formula) -> bool:
    return isinstance(phi, ATOMIC_CLASSES)


def _contains_description(phi: Formula) -> bool:
    return any(isinstance(t, Description) for t in _term_occurrences(phi))


def _term_occurrences(phi: Formula) -> Iterator[Term]:
    """All argument-position term occurrences, not descending into bodies."""
    match phi:
        case Atom(_, args):
            yield from args
        case Exists(arg):
            yield arg
        case Identity(left, right):
            yield left
            yield right
        case Not(sub):
            yield from _term_occurrences(sub)
        case And(l, r) | Implies(l, r):
            yield from _term_occurrences(l)
            yield from _term_occurrences(r)
        case Forall(_, body):
            yield from _term_occurrences(body)
    return


# ---------------------------------------------------------------------------
# Structural queries


@lru_cache(maxsize=None)
def free_vars(phi: Formula) -> frozenset[str]:
    match phi:
        case Atom(_, args):
            return frozenset().union(*[_term_free_vars(t) for t in args]) if args else frozenset()
        case Exists(arg):
            return _term_free_vars(arg)
        case Identity(l, r):
            return _term_free_vars(l) | _term_free_vars(r)
        case Not(sub):
            return free_vars(sub)
        case And(l, r) | Implies(l, r):
            return free_vars(l) | free_vars(r)
        case Forall(v, body):
            return free_vars(body) - {v}
    raise TypeError(phi)


def _term_free_vars(t: Term) -> frozenset[str]:
    match t:
        case Param(_):
            return frozenset()
        case Var(name):
            return frozenset({name})
        case Description(v, body):
            return free_vars(body) - {v}
    raise TypeError(t)


def is_closed(phi: Formula) -> bool:
    return not free_vars(phi)


@lru_cache(maxsize=None)
def parameters_of(phi: Formula) -> frozenset[str]:
    """Every parameter occurring anywhere, including inside descriptions."""
    out: set[str] = set()
    for t in _term_occurrences(phi):
        out |= _term_params(t)
    return frozenset(out)


def _term_params(t: Term) -> frozenset[str]:
    match t:
        case Param(name):
            return frozenset({name})
        case Var(_):
            return frozenset()
        case Description(_, body):
            return parameters_of(body)
    raise TypeError(t)


@lru_cache(maxsize=None)
def complexity(phi: Formula) -> int:
    """Number of logical symbols: connectives, quantifiers, iota and
    predicate symbols (including E and =)."""
    match phi:
        case Atom(_, args):
            return 1 + sum(_term_complexity(t) for t in args)
        case Exists(arg):
            return 1 + _term_complexity(arg)
        case Identity(l, r):
            return 1 + _term_complexity(l) + _term_complexity(r)
        case Not(sub):
            return 1 + complexity(sub)
        case And(l, r) | Implies(l, r):
            return 1 + complexity(l) + complexity(r)
        case Forall(_, body):
            return 1 + complexity(body)
    raise TypeError(phi)


def _term_complexity(t: Term) -> int:
    if isinstance(t, Description):
        return 1 + complexity(t.body)
    return 0


def subterms_of(phi: Formula) -> frozenset[Term]:
    """Closed argument terms occurring in ``phi`` (parameters and
    descriptions), including parameters inside description bodies."""
    out: set[Term] = set()
    for t in _term_occurrences(phi):
        match t:
            case Param(_):
                out.add(t)
            case Description(_, body):
                out.add(t)
                out |= {Param(p) for p in parameters_of(body)}
            case Var(_):
                pass
    return frozenset(out)


def descriptions_of(phi: Formula) -> frozenset[Description]:
    return frozenset(t for t in _term_occurrences(phi) if isinstance(t, Description))


def argument_terms(phi: Formula) -> tuple[Term, ...]:
    """The immediate argument terms of an atomic formula."""
    match phi:
        case Atom(_, args):
            return args
        case Exists(arg):
            return (arg,)
        case Identity(l, r):
            return (l, r)
    raise TypeError(f"not atomic: {phi}")


# ---------------------------------------------------------------------------
# Substitution

_SUFFIX = re.compile(r"^(.*?)(\d*)$")


def fresh_name(base: str, used: Iterable[str]) -> str:
    used = set(used)
    if base not in used:
        return base
    stem, digits = _SUFFIX.match(base).groups()
    n = int(digits) + 1 if digits else 1
    while f"{stem}{n}" in used:
        n += 1
    return f"{stem}{n}"


def substitute(phi: Formula, name: str, to: Term) -> Formula:
    """Replace free occurrences of the parameter or variable ``name``.

    Capture is avoided by renaming bound variables of ``phi`` when ``to``
    contains a variable that a binder would capture.
    """
    if name not in free_vars(phi) and name not in parameters_of(phi):
        return phi
    return _subst(phi, name, to)


def _hits_term(t: Term, name: str) -> bool:
    match t:
        case Param(n) | Var(n):
            return n == name
        case Description(v, body):
            return name != v and (name in free_vars(body) or name in parameters_of(body))
    raise TypeError(t)


def _subst_term(t: Term, name: str, to: Term) -> Term:
    match t:
        case Param(n) | Var(n):
            return to if n == name else t
        case Description(v, body):
            if v == name:
                return t
            if name not in free_vars(body) and name not in parameters_of(body):
                return t
            if v in _term_free_vars(to):
                used = free_vars(body) | parameters_of(body) | _term_free_vars(to) | {name}
                fresh = fresh_name(v, used)
                return Description(fresh, _subst(_subst(body, v, Var(fresh)), name, to))
            return Description(v, _subst(body, name, to))
    raise TypeError(t)


def _subst(phi: Formula, name: str, to: Term) -> Formula:
    match phi:
        case Atom(p, args):
            return Atom(p, tuple(_subst_term(t, name, to) for t in args))
        case Exists(arg):
            return Exists(_subst_term(arg, name, to))
        case Identity(l, r):
            return Identity(_subst_term(l, name, to), _subst_term(r, name, to))
        case Not(sub):
            return Not(_subst(sub, name, to))
        case And(l, r):
            return And(_subst(l, name, to), _subst(r, name, to))
        case Implies(l, r):
            return Implies(_subst(l, name, to), _subst(r, name, to))
        case Forall(v, body):
            if v == name:
                return phi
            if v in _term_free_vars(to) and name in free_vars(body) | parameters_of(body):
                used = free_vars(body) | parameters_of(body) | _term_free_vars(to) | {name}
                fresh = fresh_name(v, used)
                return Forall(fresh, _subst(_subst(body, v, Var(fresh)), name, to))
            return Forall(v, _subst(body, name, to))
    raise TypeError(phi)


def substitute_multiset(formulas: Iterable[Formula], name: str, to: Term) -> tuple[Formula, ...]:
    return tuple(substitute(f, name, to) for f in formulas)


# ---------------------------------------------------------------------------
# Printing

_IMP, _AND, _NEG = 0, 1, 2


def fmt_term(t: Term) -> str:
    match t:
        case Param(n) | Var(n):
            return n
        case Description(v, body):
            return f"i{v}.({fmt_formula(body)})"
    raise TypeError(t)


@lru_cache(maxsize=None)
def fmt_formula(phi: Formula) -> str:
    return _fmt(phi, _IMP)


def _fmt(phi: Formula, level: int) -> str:
    match phi:
        case Atom(p, args):
            if not args:
                return p
            return f"{p}({', '.join(fmt_term(t) for t in args)})"
        case Exists(arg):
            return f"E{fmt_term(arg)}"
        case Identity(l, r):
            return f"{fmt_term(l)} = {fmt_term(r)}"
        case Not(sub):
            return f"~{_fmt(sub, _NEG)}"
        case And(l, r):
            s = f"{_fmt(l, _NEG)} & {_fmt(r, _AND)}"
            return f"({s})" if level > _AND else s
        case Implies(l, r):
            s = f"{_fmt(l, _AND)} -> {_fmt(r, _IMP)}"
            return f"({s})" if level > _IMP else s
        case Forall(v, body):
            s = f"A{v}.{_fmt(body, _IMP)}"
            return f"({s})" if level > _IMP else s
    raise TypeError(phi)


def formula_key(phi: Formula) -> str:
    return fmt_formula(phi)


# ---------------------------------------------------------------------------
# Bisequents


@dataclass(frozen=True)
class Bisequent:
    """Ordered pair of sequents ``gamma => delta | pi => sigma``.

    The four components are multisets; construction sorts them so that
    equality and hashing are order-insensitive but multiplicity-sensitive.
    """

    gamma: tuple[Formula, ...] = ()
    delta: tuple[Formula, ...] = ()
    pi: tuple[Formula, ...] = ()
    sigma: tuple[Formula, ...] = ()

    def __post_init__(self):
        for zone in ("gamma", "delta", "pi", "sigma"):
            object.__setattr__(
                self, zone, tuple(sorted(getattr(self, zone), key=formula_key))
            )

    def zone(self, name: str) -> tuple[Formula, ...]:
        return getattr(self, name)

    def replace(self, name: str, formulas: Iterable[Formula]) -> "Bisequent":
        parts = {z: self.zone(z) for z in ZONES}
        parts[name] = tuple(formulas)
        return Bisequent(**parts)

    def plus(self, name: str, *formulas: Formula) -> "Bisequent":
        return self.replace(name, self.zone(name) + tuple(formulas))

    def minus(self, name: str, *formulas: Formula) -> "Bisequent":
        pool = list(self.zone(name))
        for f in formulas:
            pool.remove(f)  # raises ValueError if absent
        return self.replace(name, pool)

    def count(self, name: str, phi: Formula) -> int:
        return self.zone(name).count(phi)

    def formulas(self) -> Iterator[tuple[str, Formula]]:
        for z in ZONES:
            for f in self.zone(z):
                yield z, f

    def all_formulas(self) -> tuple[Formula, ...]:
        return self.gamma + self.delta + self.pi + self.sigma

    def is_closed(self) -> bool:
        return all(is_closed(f) for f in self.all_formulas())

    def parameters(self) -> frozenset[str]:
        out: set[str] = set()
        for f in self.all_formulas():
            out |= parameters_of(f)
        return frozenset(out)

    def __str__(self) -> str:
        def side(ant, suc):
            a = ", ".join(fmt_formula(f) for f in ant)
            s = ", ".join(fmt_formula(f) for f in suc)
            return f"{a} => {s}".strip()

        return f"{side(self.gamma, self.delta)} | {side(self.pi, self.sigma)}"


ZONES = ("gamma", "delta", "pi", "sigma")


def merge(a: Bisequent, b: Bisequent) -> Bisequent:
    return Bisequent(
        a.gamma + b.gamma, a.delta + b.delta, a.pi + b.pi, a.sigma + b.sigma
    )


def substitute_bisequent(b: Bisequent, name: str, to: Term) -> Bisequent:
    return Bisequent(
        substitute_multiset(b.gamma, name, to),
        substitute_multiset(b.delta, name, to),
        substitute_multiset(b.pi, name, to),
        substitute_multiset(b.sigma, name, to),
    )


def parameters_of_any(obj: Union[Formula, Bisequent]) -> frozenset[str]:
    if isinstance(obj, Bisequent):
        return obj.parameters()
    return parameters_of(obj)


# ---------------------------------------------------------------------------
# Lexer / parser

_TOKEN = re.compile(
    r"\s*(?:(?P<arrow>->)|(?P<seq>=>)|(?P<pipe>\|)|(?P<amp>&)|(?P<tilde>~)"
    r"|(?P<eq>=)|(?P<lp>\()|(?P<rp>\))|(?P<comma>,)|(?P<dot>\.)"
    r"|(?P<ident>[A-Za-z][A-Za-z0-9_]*))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == m.start():
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            raise ParseError(f"unexpected character {stripped[0]!r}", pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.bound: list[str] = []

    def peek(self, k: int = 0):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str):
        tok = self.next()
        if tok[0] != kind:
            raise ParseError(f"expected {kind!r}, found {tok[1]!r}", tok[2])
        return tok

    def error(self, msg: str):
        raise ParseError(msg, self.peek()[2])

    # -- grammar: formula := implies
    def formula(self) -> Formula:
        left = self.conj()
        if self.peek()[0] == "arrow":
            self.next()
            return Implies(left, self.formula())
        return left

    def conj(self) -> Formula:
        left = self.neg()
        if self.peek()[0] == "amp":
            self.next()
            return And(left, self.conj())
        return left

    def neg(self) -> Formula:
        if self.peek()[0] == "tilde":
            self.next()
            return Not(self.neg())
        return self.atomlike()

    def _split_ident(self, rest: str):
        """Replace the current token with a synthetic identifier ``rest``."""
        kind, _, pos = self.toks[self.i]
        self.toks[self.i] = (kind, rest, pos + 1)

    def atomlike(self) -> Formula:
        kind, val, pos = self.peek()
        if kind == "lp":
            self.next()
            phi = self.formula()
            self.expect("rp")
            return phi
        if kind != "ident":
            self.error(f"expected a formula, found {val!r}")

        # quantifier: fused "Ax." or spaced "A x ."
        if val == "A" and self.peek(1)[0] == "ident" and self.peek(2)[0] == "dot":
            self.next()
            var = self.next()[1]
            self.next()
            return self._forall_body(var)
        if len(val) > 1 and val[0] == "A" and self.peek(1)[0] == "dot":
            self.next()
            self.next()
            return self._forall_body(val[1:])

        # existence atom: "E t" or fused "Et"
        if val == "E":
            self.next()
            return Exists(self.term())
        if len(val) > 1 and val[0] == "E" and val[1].islower():
            self._split_ident(val[1:])
            return Exists(self.term())

        # predicate with arguments
        if self.peek(1)[0] == "lp" and not self._is_description_start(val):
            self.next()
            self.next()
            args = [self.term()]
            while self.peek()[0] == "comma":
                self.next()
                args.append(self.term())
            self.expect("rp")
            return Atom(val, tuple(args))

        # a term followed by "=" is an identity; otherwise a 0-ary atom
        if self._is_description_start(val) or self.peek(1)[0] == "eq":
            left = self.term()
            if self.peek()[0] != "eq":
                self.error("a description is a term, not a formula")
            self.next()
            return Identity(left, self.term())
        self.next()
        return Atom(val, ())

    def _forall_body(self, var: str) -> Formula:
        self.bound.append(var)
        try:
            body = self.formula()
        finally:
            self.bound.pop()
        return Forall(var, body)

    def _is_description_start(self, val: str) -> bool:
        return len(val) > 1 and val[0] == "i" and self.peek(1)[0] == "dot"

    def term(self) -> Term:
        kind, val, pos = self.next()
        if kind != "ident":
            raise ParseError(f"expected a term, found {val!r}", pos)
        if len(val) > 1 and val[0] == "i" and self.peek()[0] == "dot":
            self.next()
            var = val[1:]
            self.bound.append(var)
            try:
                if self.peek()[0] == "lp":
                    self.next()
                    body = self.formula()
                    self.expect("rp")
                else:
                    body = self.atomlike()
            finally:
                self.bound.pop()
            try:
                return Description(var, body)
            except (NestedDescriptionError, OpenDescriptionError) as e:
                raise ParseError(str(e), pos) from e
        if val in self.bound:
            return Var(val)
        return Param(val)

    # -- bisequent: "G => D | P => S"
    def bisequent(self) -> Bisequent:
        gamma = self.formula_list(("seq",))
        self.expect("seq")
        delta = self.formula_list(("pipe",))
        self.expect("pipe")
        pi = self.formula_list(("seq",))
        self.expect("seq")
        sigma = self.formula_list(("end",))
        return Bisequent(tuple(gamma), tuple(delta), tuple(pi), tuple(sigma))

    def formula_list(self, stops) -> list[Formula]:
        if self.peek()[0] in stops:
            return []
        out = [self.formula()]
        while self.peek()[0] == "comma":
            self.next()
            out.append(self.formula())
        return out


def parse_formula(text: str) -> Formula:
    p = _Parser(text)
    phi = p.formula()
    if p.peek()[0] != "end":
        p.error(f"trailing input {p.peek()[1]!r}")
    if not is_closed(phi):
        # free variables are only legal under binders; a stray identifier
        # lexes as a parameter, so this can only arise programmatically
        raise ParseError(f"unbound variable in {phi}", 0)
    return phi


def parse_term(text: str) -> Term:
    p = _Parser(text)
    t = p.term()
    if p.peek()[0] != "end":
        p.error(f"trailing input {p.peek()[1]!r}")
    return t


def parse_bisequent(text: str) -> Bisequent:
    p = _Parser(text)
    b = p.bisequent()
    if p.peek()[0] != "end":
        p.error(f"trailing input {p.peek()[1]!r}")
    return b
