"""Finite neutral structures and the weak/strong Kleene valuations.

A neutral structure interprets a finite list of parameters; the existence
predicate carves out the denoting ones, identity is an equivalence on the
existing elements, and predicate extensions are congruence-closed subsets
of tuples of existing elements.  Definite descriptions are resolved by the
uniqueness condition: ``ix.(body)`` denotes the class of the unique
existing element (up to identity) making the body true while it is false
everywhere else; otherwise the description is undefined.

The module also provides a brute-force enumeration oracle for validity and
entailment at bounded domain size, plus a propositional matrix mode for
bisequents built from 0-ary atoms only.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Union

from .syntax import (
    And,
    Atom,
    Bisequent,
    Description,
    Exists,
    Forall,
    Formula,
    Identity,
    Implies,
    Not,
    Param,
    Term,
    Var,
    fmt_formula,
    fresh_name,
    parameters_of,
    parse_term,
    substitute,
)


class ConstraintViolation(ValueError):
    def __init__(self, invariant: str, detail: str = ""):
        super().__init__(f"{invariant}: {detail}" if detail else invariant)
        self.invariant = invariant


class BudgetExceeded(RuntimeError):
    pass


class TruthValue(Enum):
    ZERO = 0.0
    HALF = 0.5
    ONE = 1.0

    def __lt__(self, other: "TruthValue") -> bool:
        return self.value < other.value

    def __repr__(self) -> str:
        return {0.0: "0", 0.5: "1/2", 1.0: "1"}[self.value]


ZERO, HALF, ONE = TruthValue.ZERO, TruthValue.HALF, TruthValue.ONE


class ValuationKind(Enum):
    WEAK = "weak"
    STRONG = "strong"


WEAK, STRONG = ValuationKind.WEAK, ValuationKind.STRONG


@dataclass(frozen=True)
class NeutralStructure:
    domain: tuple[str, ...]
    existing: frozenset[str]
    equal: frozenset[tuple[str, str]]  # full I(=): Ref + extras, sym/trans closed
    predicates: tuple[tuple[str, frozenset[tuple[str, ...]]], ...]

    def extension(self, pred: str) -> frozenset[tuple[str, ...]]:
        for name, ext in self.predicates:
            if name == pred:
                return ext
        return frozenset()

    def related(self, a: str, b: str) -> bool:
        return (a, b) in self.equal

    def classes(self) -> list[frozenset[str]]:
        seen: set[str] = set()
        out = []
        for a in sorted(self.existing):
            if a in seen:
                continue
            cls = frozenset(b for b in self.existing if self.related(a, b))
            seen |= cls
            out.append(cls)
        return out

    def __str__(self) -> str:
        preds = ", ".join(
            f"{n}:{{{', '.join('(' + ','.join(t) + ')' for t in sorted(ext))}}}"
            for n, ext in self.predicates
        )
        eq = ", ".join(f"{a}~{b}" for a, b in sorted(self.equal) if a < b)
        return (
            f"domain={{{', '.join(self.domain)}}} existing={{{', '.join(sorted(self.existing))}}}"
            + (f" id={{{eq}}}" if eq else "")
            + (f" {preds}" if preds else "")
        )


def _close_identity(existing: frozenset[str], extra: Iterable[tuple[str, str]]):
    pairs = {(a, a) for a in existing}
    pairs |= {tuple(p) for p in extra}
    changed = True
    while changed:
        changed = False
        for a, b in list(pairs):
            if (b, a) not in pairs:
                pairs.add((b, a))
                changed = True
            for c, d in list(pairs):
                if b == c and (a, d) not in pairs:
                    pairs.add((a, d))
                    changed = True
    return frozenset(pairs)


def make_structure(
    domain: Iterable[str],
    existing: Iterable[str],
    identity_extra: Iterable[tuple[str, str]] = (),
    predicates: Optional[Mapping[str, Iterable[Sequence[str]]]] = None,
    dd_assignment: Optional[Mapping[Union[Description, str], str]] = None,
    kind: ValuationKind = STRONG,
) -> NeutralStructure:
    """Build and validate a neutral structure.

    ``identity_extra`` is closed under symmetry and transitivity together
    with the reflexive pairs over the existing elements.  Any supplied
    description assignment is checked against the uniqueness condition.
    """
    domain = tuple(dict.fromkeys(domain))
    existing = frozenset(existing)
    if not existing <= set(domain):
        raise ConstraintViolation("containment", "existing elements outside domain")
    for a, b in identity_extra:
        if a not in existing or b not in existing:
            raise ConstraintViolation("containment", f"identity pair ({a},{b}) outside I(E)")
    equal = _close_identity(existing, identity_extra)
    preds = []
    for name in sorted(predicates or {}):
        ext = frozenset(tuple(t) for t in (predicates or {})[name])
        for tup in ext:
            if not set(tup) <= existing:
                raise ConstraintViolation("containment", f"{name}{tup} outside I(E)^n")
        for tup in ext:
            for i, s in enumerate(tup):
                for (x, y) in equal:
                    if x == s:
                        swapped = tup[:i] + (y,) + tup[i + 1 :]
                        if swapped not in ext:
                            raise ConstraintViolation(
                                "congruence", f"{name}{tup} vs {name}{swapped}"
                            )
        preds.append((name, ext))
    struct = NeutralStructure(domain, existing, equal, tuple(preds))
    for desc, value in (dd_assignment or {}).items():
        if isinstance(desc, str):
            desc = parse_term(desc)
        if not isinstance(desc, Description):
            raise ConstraintViolation("dd-condition", f"{desc} is not a description")
        denot = denotation(struct, kind, desc)
        if denot is None or not struct.related(denot, value):
            raise ConstraintViolation(
                "dd-condition", f"{desc} cannot denote {value} in {struct}"
            )
    return struct


# ---------------------------------------------------------------------------
# Valuation


@lru_cache(maxsize=None)
def denotation(struct: NeutralStructure, kind: ValuationKind, desc: Description) -> Optional[str]:
    """The witness of the uniqueness condition, or None when undefined.

    The body must be true at the witness and false at every existing
    element not identical to it; the returned name is the least member of
    the witness's identity class.
    """
    for cls in struct.classes():
        rep = min(cls)
        if eval_formula(struct, kind, substitute(desc.body, desc.var, Param(rep))) is not ONE:
            continue
        others_false = all(
            eval_formula(struct, kind, substitute(desc.body, desc.var, Param(b))) is ZERO
            for b in sorted(struct.existing - cls)
        )
        if others_false:
            return rep
    return None


def _resolve(struct: NeutralStructure, kind: ValuationKind, t: Term):
    """Return (name, exists, undefined_description)."""
    match t:
        case Param(name):
            return name, name in struct.existing, False
        case Description(_, _):
            d = denotation(struct, kind, t)
            if d is None:
                return None, False, True
            return d, True, False
        case Var(name):
            raise ValueError(f"open term {name}")
    raise TypeError(t)


@lru_cache(maxsize=200_000)
def eval_formula(struct: NeutralStructure, kind: ValuationKind, phi: Formula) -> TruthValue:
    """The paper's case analysis, for either Kleene valuation.

    Atoms with a non-denoting argument are gappy, existence atoms are
    two-valued, and identity follows the predicate pattern except that an
    identity with an undefined description is false rather than gappy
    (a non-denoting description is identical to nothing).
    """
    match phi:
        case Exists(arg):
            _, exists, _ = _resolve(struct, kind, arg)
            return ONE if exists else ZERO
        case Atom(pred, args):
            resolved = [_resolve(struct, kind, t) for t in args]
            if any(not ex for _, ex, _ in resolved):
                return HALF
            tup = tuple(name for name, _, _ in resolved)
            return ONE if tup in struct.extension(pred) else ZERO
        case Identity(l, r):
            ln, lex, lundef = _resolve(struct, kind, l)
            rn, rex, rundef = _resolve(struct, kind, r)
            if lundef or rundef:
                return ZERO
            if not (lex and rex):
                return HALF
            return ONE if struct.related(ln, rn) else ZERO
        case Not(sub):
            v = eval_formula(struct, kind, sub)
            return {ZERO: ONE, HALF: HALF, ONE: ZERO}[v]
        case And(l, r):
            a, b = eval_formula(struct, kind, l), eval_formula(struct, kind, r)
            if kind is WEAK:
                if a is HALF or b is HALF:
                    return HALF
                return ONE if (a is ONE and b is ONE) else ZERO
            if a is ZERO or b is ZERO:
                return ZERO
            if a is ONE and b is ONE:
                return ONE
            return HALF
        case Implies(l, r):
            a, b = eval_formula(struct, kind, l), eval_formula(struct, kind, r)
            if kind is WEAK:
                if a is HALF or b is HALF:
                    return HALF
                return ZERO if (a is ONE and b is ZERO) else ONE
            if a is ONE and b is ZERO:
                return ZERO
            if a is ZERO or b is ONE:
                return ONE
            return HALF
        case Forall(v, body):
            vals = [
                eval_formula(struct, kind, substitute(body, v, Param(t)))
                for t in sorted(struct.existing)
            ]
            if all(x is ONE for x in vals):
                return ONE
            if any(x is ZERO for x in vals):
                return ZERO
            return HALF
    raise TypeError(phi)


def satisfies(struct: NeutralStructure, kind: ValuationKind, b: Bisequent) -> bool:
    """True unless the valuation falsifies the bisequent: everything in
    gamma true, delta non-true, pi non-false, sigma false."""
    ev = lambda f: eval_formula(struct, kind, f)
    return (
        any(ev(f) is not ONE for f in b.gamma)
        or any(ev(f) is ONE for f in b.delta)
        or any(ev(f) is ZERO for f in b.pi)
        or any(ev(f) is not ZERO for f in b.sigma)
    )


# ---------------------------------------------------------------------------
# Propositional matrix mode (0-ary atoms)


def is_propositional(phi: Formula) -> bool:
    match phi:
        case Atom(_, args):
            return not args
        case Exists(_) | Identity(_, _) | Forall(_, _):
            return False
        case Not(sub):
            return is_propositional(sub)
        case And(l, r) | Implies(l, r):
            return is_propositional(l) and is_propositional(r)
    raise TypeError(phi)


def letters_of(phi: Formula) -> frozenset[str]:
    match phi:
        case Atom(p, ()):
            return frozenset({p})
        case Not(sub):
            return letters_of(sub)
        case And(l, r) | Implies(l, r):
            return letters_of(l) | letters_of(r)
    return frozenset()


def prop_eval(assignment: Mapping[str, TruthValue], kind: ValuationKind, phi: Formula) -> TruthValue:
    match phi:
        case Atom(p, ()):
            return assignment[p]
        case Not(sub):
            v = prop_eval(assignment, kind, sub)
            return {ZERO: ONE, HALF: HALF, ONE: ZERO}[v]
        case And(l, r):
            a, b = prop_eval(assignment, kind, l), prop_eval(assignment, kind, r)
            if kind is WEAK:
                if a is HALF or b is HALF:
                    return HALF
                return ONE if (a is ONE and b is ONE) else ZERO
            if a is ZERO or b is ZERO:
                return ZERO
            return ONE if (a is ONE and b is ONE) else HALF
        case Implies(l, r):
            a, b = prop_eval(assignment, kind, l), prop_eval(assignment, kind, r)
            if kind is WEAK:
                if a is HALF or b is HALF:
                    return HALF
                return ZERO if (a is ONE and b is ZERO) else ONE
            if a is ONE and b is ZERO:
                return ZERO
            return ONE if (a is ZERO or b is ONE) else HALF
    raise TypeError(f"not propositional: {phi}")


def prop_assignments(letters: Iterable[str]) -> Iterator[dict[str, TruthValue]]:
    letters = sorted(set(letters))
    for values in itertools.product((ZERO, HALF, ONE), repeat=len(letters)):
        yield dict(zip(letters, values))


def prop_satisfies(assignment, kind: ValuationKind, b: Bisequent) -> bool:
    ev = lambda f: prop_eval(assignment, kind, f)
    return (
        any(ev(f) is not ONE for f in b.gamma)
        or any(ev(f) is ONE for f in b.delta)
        or any(ev(f) is ZERO for f in b.pi)
        or any(ev(f) is not ZERO for f in b.sigma)
    )


def prop_valid(phi: Formula, kind: ValuationKind) -> Optional[dict[str, TruthValue]]:
    """None when phi is designated under every assignment, else a witness."""
    for asg in prop_assignments(letters_of(phi)):
        if prop_eval(asg, kind, phi) is not ONE:
            return asg
    return None


# ---------------------------------------------------------------------------
# Enumeration oracle


def _partitions(items: list[str]) -> Iterator[list[list[str]]]:
    if not items:
        yield []
        return
    head, rest = items[0], items[1:]
    for part in _partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[head] + part[i]] + part[i + 1 :]
        yield [[head]] + part


def collect_signature(formulas: Iterable[Formula]):
    """Parameters and predicate arities mentioned anywhere, including
    inside description bodies."""
    params: set[str] = set()
    preds: dict[str, int] = {}

    def walk(phi: Formula):
        match phi:
            case Atom(p, args):
                preds[p] = len(args)
                for t in args:
                    walk_term(t)
            case Exists(arg):
                walk_term(arg)
            case Identity(l, r):
                walk_term(l)
                walk_term(r)
            case Not(sub):
                walk(sub)
            case And(l, r) | Implies(l, r):
                walk(l)
                walk(r)
            case Forall(_, body):
                walk(body)

    def walk_term(t: Term):
        match t:
            case Param(name):
                params.add(name)
            case Description(_, body):
                walk(body)
            case Var(_):
                pass

    for f in formulas:
        walk(f)
    return sorted(params), dict(sorted(preds.items()))


def enumerate_structures(
    params: Sequence[str],
    preds: Mapping[str, int],
    max_domain: int,
    max_structures: Optional[int] = None,
) -> Iterator[NeutralStructure]:
    """Every structure over the given signature with ``|D| <= max_domain``,
    possibly padding the domain with fresh anonymous elements.

    Description denotations are not enumerated: the uniqueness condition
    forces them from the rest of the structure.
    """
    params = list(dict.fromkeys(params))
    extras: list[str] = []
    used = set(params)
    while len(params) + len(extras) < max_domain:
        nxt = fresh_name("w1", used)
        used.add(nxt)
        extras.append(nxt)
    count = 0
    for n_extra in range(len(extras) + 1):
        domain = tuple(params + extras[:n_extra])
        for existing_mask in itertools.product((False, True), repeat=len(domain)):
            existing = [d for d, keep in zip(domain, existing_mask) if keep]
            for part in _partitions(existing):
                classes = [sorted(c) for c in part]
                pairs = [
                    (a, b) for c in classes for a in c for b in c
                ]
                reps = [c[0] for c in classes]
                pred_choices = []
                for name, arity in preds.items():
                    rep_tuples = list(itertools.product(reps, repeat=arity))
                    options = []
                    for mask in itertools.product((False, True), repeat=len(rep_tuples)):
                        chosen = [t for t, keep in zip(rep_tuples, mask) if keep]
                        full = set()
                        for tup in chosen:
                            cls_sets = [classes[reps.index(r)] for r in tup]
                            full |= set(itertools.product(*cls_sets)) if arity else {()}
                        options.append(frozenset(full))
                    pred_choices.append((name, options))
                for combo in itertools.product(*[opts for _, opts in pred_choices]):
                    count += 1
                    if max_structures is not None and count > max_structures:
                        raise BudgetExceeded(f"more than {max_structures} structures")
                    yield NeutralStructure(
                        domain,
                        frozenset(existing),
                        _close_identity(frozenset(existing), pairs),
                        tuple(
                            (name, ext)
                            for (name, _), ext in zip(pred_choices, combo)
                        ),
                    )


@dataclass(frozen=True)
class ValidityResult:
    valid: bool
    witness: Union[NeutralStructure, dict, None] = None
    propositional: bool = False

    def __bool__(self) -> bool:
        return self.valid


def valid(
    b: Bisequent,
    kind: ValuationKind,
    max_domain: int = 3,
    max_structures: Optional[int] = None,
) -> ValidityResult:
    """Bounded validity: search all structures up to ``max_domain`` (or all
    propositional assignments for purely propositional input) for a
    falsifying valuation."""
    formulas = b.all_formulas()
    if formulas and all(is_propositional(f) for f in formulas):
        letters = frozenset().union(*[letters_of(f) for f in formulas])
        for asg in prop_assignments(letters):
            if not prop_satisfies(asg, kind, b):
                return ValidityResult(False, asg, propositional=True)
        return ValidityResult(True, propositional=True)
    params, preds = collect_signature(formulas)
    for struct in enumerate_structures(params, preds, max_domain, max_structures):
        if not satisfies(struct, kind, b):
            return ValidityResult(False, struct)
    return ValidityResult(True)


def entails(
    gamma: Iterable[Formula],
    phi: Formula,
    kind: ValuationKind,
    max_domain: int = 3,
) -> ValidityResult:
    """Bounded check of designated-value entailment, via the bisequent
    ``gamma => phi | =>``."""
    return valid(Bisequent(tuple(gamma), (phi,), (), ()), kind, max_domain)


# ---------------------------------------------------------------------------
# Structure JSON (external interface)


def structure_to_json(
    struct: NeutralStructure,
    kind: ValuationKind = STRONG,
    descriptions: Iterable[Description] = (),
) -> dict:
    dd = []
    for desc in descriptions:
        d = denotation(struct, kind, desc)
        if d is not None:
            dd.append({"term": str(desc), "value": d})
    return {
        "domain": list(struct.domain),
        "existing": sorted(struct.existing),
        "id": sorted([a, b] for a, b in struct.equal if a < b),
        "pred": {
            name: sorted(list(t) for t in ext) for name, ext in struct.predicates
        },
        "dd": dd,
    }


def structure_from_json(data: Mapping, kind: ValuationKind = STRONG) -> NeutralStructure:
    return make_structure(
        data.get("domain", []),
        data.get("existing", []),
        [tuple(p) for p in data.get("id", [])],
        {name: [tuple(t) for t in tuples] for name, tuples in data.get("pred", {}).items()},
        {entry["term"]: entry["value"] for entry in data.get("dd", [])},
        kind,
    )
