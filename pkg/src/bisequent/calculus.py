"""Rule schemas, axiomatic bisequents, backward rule application and the
derivation checker.

Every rule is driven by a single schema engine, ``rule_premises``: given a
conclusion and a rule instance it computes the premises the schema demands
and enforces every side condition (eigenparameter freshness, parameter-only
instantiation, atom class restrictions, variant gating).  The checker and
the backward prover both go through it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Iterator, Optional, Sequence

from .semantics import ValuationKind, WEAK, STRONG
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
    argument_terms,
    formula_key,
    fresh_name,
    is_atomic,
    fmt_formula,
    fmt_term,
    substitute,
)


class RuleId(Enum):
    # Fig. 1: propositional rules (strong Kleene core)
    NegLseqL = "NegLseqL"
    NegRseqL = "NegRseqL"
    NegLseqR = "NegLseqR"
    NegRseqR = "NegRseqR"
    AndLseqL = "AndLseqL"
    AndRseqL = "AndRseqL"
    AndLseqR = "AndLseqR"
    AndRseqR = "AndRseqR"
    ImpRseqL = "ImpRseqL"
    ImpRseqR = "ImpRseqR"
    ImpLseqL = "ImpLseqL"
    ImpLseqR = "ImpLseqR"
    # Fig. 2: weak Kleene replacements (three premises)
    AndLseqR_w = "AndLseqR_w"
    AndRseqR_w = "AndRseqR_w"
    ImpRseqL_w = "ImpRseqL_w"
    ImpLseqL_w = "ImpLseqL_w"
    # Fig. 3: quantifier and existence rules
    ForallRseqL = "ForallRseqL"
    ForallRseqR = "ForallRseqR"
    ForallLseqL = "ForallLseqL"
    ForallLseqR = "ForallLseqR"
    ExLseqL = "ExLseqL"
    ExRseqR = "ExRseqR"
    ExMoveL = "ExMoveL"
    ExTr1 = "ExTr1"
    ExRintroL = "ExRintroL"
    ExTr2 = "ExTr2"
    # Fig. 4: identity rules
    IdRight3 = "IdRight3"
    IdRefl = "IdRefl"
    EIotaRefl = "EIotaRefl"
    # Fig. 5: definite description rules
    IotaL1 = "IotaL1"
    IotaL1R = "IotaL1R"
    IotaL2 = "IotaL2"
    IotaL2R = "IotaL2R"
    IotaRR = "IotaRR"
    IotaRL = "IotaRL"
    # axiom markers
    AxAtom = "AxAtom"
    AxExistPred = "AxExistPred"


_K3_ONLY = {RuleId.AndLseqR, RuleId.AndRseqR, RuleId.ImpRseqL, RuleId.ImpLseqL}
_K3W_ONLY = {RuleId.AndLseqR_w, RuleId.AndRseqR_w, RuleId.ImpRseqL_w, RuleId.ImpLseqL_w}
AXIOM_RULES = {RuleId.AxAtom, RuleId.AxExistPred}

RULE_ARITY = {
    **{r: 1 for r in RuleId},
    RuleId.AndRseqL: 2,
    RuleId.AndRseqR: 2,
    RuleId.ImpLseqL: 2,
    RuleId.ImpLseqR: 2,
    RuleId.AndLseqR_w: 3,
    RuleId.AndRseqR_w: 3,
    RuleId.ImpRseqL_w: 3,
    RuleId.ImpLseqL_w: 3,
    RuleId.IotaL2: 2,
    RuleId.IotaL2R: 2,
    RuleId.IotaRR: 2,
    RuleId.IotaRL: 2,
    RuleId.IdRight3: 3,
    RuleId.AxAtom: 0,
    RuleId.AxExistPred: 0,
}

LATEX_LABEL = {
    RuleId.NegLseqL: r"(\neg\Rightarrow\mid)",
    RuleId.NegRseqL: r"(\Rightarrow\neg\mid)",
    RuleId.NegLseqR: r"(\mid\neg\Rightarrow)",
    RuleId.NegRseqR: r"(\mid\Rightarrow\neg)",
    RuleId.AndLseqL: r"(\wedge\Rightarrow\mid)",
    RuleId.AndRseqL: r"(\Rightarrow\wedge\mid)",
    RuleId.AndLseqR: r"(\mid\wedge\Rightarrow)",
    RuleId.AndRseqR: r"(\mid\Rightarrow\wedge)",
    RuleId.ImpRseqL: r"(\Rightarrow\rightarrow\mid)",
    RuleId.ImpRseqR: r"(\mid\Rightarrow\rightarrow)",
    RuleId.ImpLseqL: r"(\rightarrow\Rightarrow\mid)",
    RuleId.ImpLseqR: r"(\mid\rightarrow\Rightarrow)",
    RuleId.AndLseqR_w: r"(\mid\wedge_w\Rightarrow)",
    RuleId.AndRseqR_w: r"(\mid\Rightarrow\wedge_w)",
    RuleId.ImpRseqL_w: r"(\Rightarrow\rightarrow_w\mid)",
    RuleId.ImpLseqL_w: r"(\rightarrow_w\Rightarrow\mid)",
    RuleId.ForallRseqL: r"(\Rightarrow\forall\mid)",
    RuleId.ForallRseqR: r"(\mid\Rightarrow\forall)",
    RuleId.ForallLseqL: r"(\forall\Rightarrow\mid)",
    RuleId.ForallLseqR: r"(\mid\forall\Rightarrow)",
    RuleId.ExLseqL: r"(E\Rightarrow\mid)",
    RuleId.ExRseqR: r"(\mid\Rightarrow E)",
    RuleId.ExMoveL: r"(\mid E\Rightarrow)",
    RuleId.ExTr1: r"(ETr_1)",
    RuleId.ExRintroL: r"(\Rightarrow E\mid)",
    RuleId.ExTr2: r"(ETr_2)",
    RuleId.IdRight3: r"(\mid\Rightarrow =)",
    RuleId.IdRefl: r"(=\Rightarrow\mid)",
    RuleId.EIotaRefl: r"(E\iota\Rightarrow\mid)",
    RuleId.IotaL1: r"(\iota\Rightarrow\mid 1)",
    RuleId.IotaL1R: r"(\mid\iota\Rightarrow 1)",
    RuleId.IotaL2: r"(\iota\Rightarrow\mid 2)",
    RuleId.IotaL2R: r"(\mid\iota\Rightarrow 2)",
    RuleId.IotaRR: r"(\mid\Rightarrow\iota)",
    RuleId.IotaRL: r"(\Rightarrow\iota\mid)",
    RuleId.AxAtom: r"(Ax)",
    RuleId.AxExistPred: r"(AxE)",
}


def active_in(rule: RuleId, variant: ValuationKind) -> bool:
    if rule in _K3_ONLY:
        return variant is STRONG
    if rule in _K3W_ONLY:
        return variant is WEAK
    return True


class CheckFailure(ValueError):
    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.detail = detail


@dataclass(frozen=True)
class Id3Spec:
    """Instantiation data for the three-premiss identity rule: terms t and
    s, the chosen orientation of t~s, and an atomic pattern with a hole."""

    t: Term
    s: Term
    teqs: Formula
    hole: str
    pattern: Formula

    def at(self, term: Term) -> Formula:
        return substitute(self.pattern, self.hole, term)


@dataclass(frozen=True)
class RuleInstance:
    rule: RuleId
    principal: Optional[tuple[str, Formula]] = None
    term: Optional[Term] = None
    eigen: Optional[str] = None
    id3: Optional[Id3Spec] = None


@dataclass(frozen=True)
class Diagnostic:
    path: str
    code: str
    detail: str = ""

    def __str__(self) -> str:
        loc = self.path or "root"
        return f"{loc}: {self.code}" + (f" ({self.detail})" if self.detail else "")


# ---------------------------------------------------------------------------
# Atom classes


def movable_atom_args(phi: Formula) -> Optional[tuple[Term, ...]]:
    """Argument terms of an atom the existence rules may act on: predicate
    atoms with at least one argument, and identities between parameters.
    Existence atoms, propositional letters and identities containing a
    description are excluded."""
    match phi:
        case Atom(_, args) if args:
            return args
        case Identity(Param(_) as l, Param(_) as r):
            return (l, r)
    return None


def id3_pattern_ok(phi: Formula) -> bool:
    return is_atomic(phi)


# ---------------------------------------------------------------------------
# The schema engine


def _need(cond: bool, code: str, detail: str = ""):
    if not cond:
        raise CheckFailure(code, detail)


def _principal(inst: RuleInstance, conclusion: Bisequent, zone: str, shape) -> Formula:
    _need(inst.principal is not None, "schema", "missing principal formula")
    z, phi = inst.principal
    _need(z == zone, "schema", f"principal must sit in {zone}, not {z}")
    _need(isinstance(phi, shape), "schema", f"principal {phi} has the wrong shape")
    _need(conclusion.count(zone, phi) >= 1, "schema", f"{phi} not in {zone} of conclusion")
    return phi


def _need_in_gamma(conclusion: Bisequent, phi: Formula, what: str):
    _need(conclusion.count("gamma", phi) >= 1, "schema", f"{what} {phi} required in gamma")


def _need_fresh(inst: RuleInstance, conclusion: Bisequent) -> str:
    _need(inst.eigen is not None, "schema", "missing eigenparameter")
    _need(
        inst.eigen not in conclusion.parameters(),
        "freshness",
        f"eigenparameter {inst.eigen} occurs in the conclusion",
    )
    return inst.eigen


def _need_param(inst: RuleInstance) -> Param:
    _need(inst.term is not None, "schema", "missing instantiated term")
    _need(
        isinstance(inst.term, Param),
        "parameter-only",
        f"instantiated term {inst.term} is not a parameter",
    )
    return inst.term


def _dd_principal(inst: RuleInstance, conclusion: Bisequent, zone: str):
    phi = _principal(inst, conclusion, zone, Identity)
    _need(isinstance(phi.left, Param), "schema", f"{phi}: left side must be a parameter")
    _need(isinstance(phi.right, Description), "schema", f"{phi}: right side must be a description")
    _need_in_gamma(conclusion, Exists(phi.left), "existence atom")
    return phi.left, phi.right


def rule_premises(
    conclusion: Bisequent, inst: RuleInstance, variant: ValuationKind
) -> tuple[Bisequent, ...]:
    """The premises the rule schema yields for this conclusion, validating
    every side condition.  Raises CheckFailure on violation."""
    r = inst.rule
    _need(active_in(r, variant), "variant", f"{r.value} is not part of this calculus")
    c = conclusion

    match r:
        case RuleId.NegLseqL:
            phi = _principal(inst, c, "gamma", Not)
            return (c.minus("gamma", phi).plus("sigma", phi.sub),)
        case RuleId.NegRseqL:
            phi = _principal(inst, c, "delta", Not)
            return (c.minus("delta", phi).plus("pi", phi.sub),)
        case RuleId.NegLseqR:
            phi = _principal(inst, c, "pi", Not)
            return (c.minus("pi", phi).plus("delta", phi.sub),)
        case RuleId.NegRseqR:
            phi = _principal(inst, c, "sigma", Not)
            return (c.minus("sigma", phi).plus("gamma", phi.sub),)

        case RuleId.AndLseqL:
            phi = _principal(inst, c, "gamma", And)
            return (c.minus("gamma", phi).plus("gamma", phi.left, phi.right),)
        case RuleId.AndRseqL:
            phi = _principal(inst, c, "delta", And)
            base = c.minus("delta", phi)
            return (base.plus("delta", phi.left), base.plus("delta", phi.right))
        case RuleId.AndLseqR:
            phi = _principal(inst, c, "pi", And)
            return (c.minus("pi", phi).plus("pi", phi.left, phi.right),)
        case RuleId.AndRseqR:
            phi = _principal(inst, c, "sigma", And)
            base = c.minus("sigma", phi)
            return (base.plus("sigma", phi.left), base.plus("sigma", phi.right))

        case RuleId.ImpRseqL:
            phi = _principal(inst, c, "delta", Implies)
            return (c.minus("delta", phi).plus("delta", phi.right).plus("pi", phi.left),)
        case RuleId.ImpRseqR:
            phi = _principal(inst, c, "sigma", Implies)
            return (c.minus("sigma", phi).plus("gamma", phi.left).plus("sigma", phi.right),)
        case RuleId.ImpLseqL:
            phi = _principal(inst, c, "gamma", Implies)
            base = c.minus("gamma", phi)
            return (base.plus("sigma", phi.left), base.plus("gamma", phi.right))
        case RuleId.ImpLseqR:
            phi = _principal(inst, c, "pi", Implies)
            base = c.minus("pi", phi)
            return (base.plus("delta", phi.left), base.plus("pi", phi.right))

        case RuleId.AndLseqR_w:
            phi = _principal(inst, c, "pi", And)
            base = c.minus("pi", phi)
            l, rr = phi.left, phi.right
            return (
                base.plus("pi", l, rr),
                base.plus("delta", l).plus("pi", l),
                base.plus("delta", rr).plus("pi", rr),
            )
        case RuleId.AndRseqR_w:
            phi = _principal(inst, c, "sigma", And)
            base = c.minus("sigma", phi)
            l, rr = phi.left, phi.right
            return (
                base.plus("sigma", l, rr),
                base.plus("gamma", l).plus("sigma", rr),
                base.plus("gamma", rr).plus("sigma", l),
            )
        case RuleId.ImpRseqL_w:
            phi = _principal(inst, c, "delta", Implies)
            base = c.minus("delta", phi)
            l, rr = phi.left, phi.right
            return (
                base.plus("delta", rr).plus("pi", l),
                base.plus("delta", l).plus("pi", l),
                base.plus("delta", rr).plus("pi", rr),
            )
        case RuleId.ImpLseqL_w:
            phi = _principal(inst, c, "gamma", Implies)
            base = c.minus("gamma", phi)
            l, rr = phi.left, phi.right
            return (
                base.plus("gamma", l, rr),
                base.plus("sigma", l, rr),
                base.plus("gamma", rr).plus("sigma", l),
            )

        case RuleId.ForallRseqL:
            phi = _principal(inst, c, "delta", Forall)
            a = _need_fresh(inst, c)
            inst_body = substitute(phi.body, phi.var, Param(a))
            return (
                c.minus("delta", phi).plus("gamma", Exists(Param(a))).plus("delta", inst_body),
            )
        case RuleId.ForallRseqR:
            phi = _principal(inst, c, "sigma", Forall)
            a = _need_fresh(inst, c)
            inst_body = substitute(phi.body, phi.var, Param(a))
            return (
                c.minus("sigma", phi).plus("gamma", Exists(Param(a))).plus("sigma", inst_body),
            )
        case RuleId.ForallLseqL:
            phi = _principal(inst, c, "gamma", Forall)
            b = _need_param(inst)
            _need_in_gamma(c, Exists(b), "existence atom")
            return (c.plus("gamma", substitute(phi.body, phi.var, b)),)
        case RuleId.ForallLseqR:
            phi = _principal(inst, c, "pi", Forall)
            b = _need_param(inst)
            _need_in_gamma(c, Exists(b), "existence atom")
            return (c.plus("pi", substitute(phi.body, phi.var, b)),)

        case RuleId.ExLseqL | RuleId.ExRseqR:
            zone = "gamma" if r is RuleId.ExLseqL else "sigma"
            z, phi = inst.principal or (None, None)
            _need(phi is not None and z == zone, "schema", "missing principal atom")
            args = movable_atom_args(phi)
            _need(args is not None, "atom-class", f"{phi} is not an eligible atom")
            _need(c.count(zone, phi) >= 1, "schema", f"{phi} not in {zone}")
            _need(inst.term is not None and inst.term in args, "schema",
                  f"term {inst.term} does not occur in {phi}")
            return (c.plus("gamma", Exists(inst.term)),)
        case RuleId.ExMoveL:
            z, phi = inst.principal or (None, None)
            _need(phi is not None and z == "pi", "schema", "missing principal atom")
            args = movable_atom_args(phi)
            _need(args is not None, "atom-class", f"{phi} is not an eligible atom")
            _need(c.count("pi", phi) >= 1, "schema", f"{phi} not in pi")
            for t in args:
                _need_in_gamma(c, Exists(t), "existence prefix")
            return (c.minus("pi", phi).plus("gamma", phi),)
        case RuleId.ExRintroL:
            z, phi = inst.principal or (None, None)
            _need(phi is not None and z == "delta", "schema", "missing principal atom")
            args = movable_atom_args(phi)
            _need(args is not None, "atom-class", f"{phi} is not an eligible atom")
            _need(c.count("delta", phi) >= 1, "schema", f"{phi} not in delta")
            for t in args:
                _need_in_gamma(c, Exists(t), "existence prefix")
            return (c.minus("delta", phi).plus("sigma", phi),)
        case RuleId.ExTr1:
            phi = _principal(inst, c, "pi", Exists)
            return (c.minus("pi", phi).plus("gamma", phi),)
        case RuleId.ExTr2:
            phi = _principal(inst, c, "delta", Exists)
            return (c.minus("delta", phi).plus("sigma", phi),)

        case RuleId.IdRefl:
            _need(inst.term is not None, "schema", "missing term")
            _need_in_gamma(c, Exists(inst.term), "existence atom")
            return (c.plus("gamma", Identity(inst.term, inst.term)),)
        case RuleId.EIotaRefl:
            phi = _principal(inst, c, "gamma", Exists)
            _need(
                isinstance(phi.arg, Description),
                "schema",
                f"{phi} must carry a description",
            )
            a = _need_fresh(inst, c)
            return (c.plus("gamma", Identity(Param(a), phi.arg)),)
        case RuleId.IdRight3:
            spec = inst.id3
            _need(spec is not None, "schema", "missing identity instantiation")
            _need(id3_pattern_ok(spec.pattern), "atom-class", f"{spec.pattern} is not atomic")
            _need(
                spec.teqs in (Identity(spec.t, spec.s), Identity(spec.s, spec.t)),
                "schema",
                f"{spec.teqs} is not an orientation of the instantiated identity",
            )
            prefix_terms = {spec.t, spec.s}
            for u in argument_terms(spec.pattern):
                if not isinstance(u, Var):
                    prefix_terms.add(u)
            for u in sorted(prefix_terms, key=fmt_term):
                _need_in_gamma(c, Exists(u), "existence prefix")
            return (
                c.plus("sigma", spec.teqs),
                c.plus("sigma", spec.at(spec.t)),
                c.plus("gamma", spec.at(spec.s)),
            )

        case RuleId.IotaL1:
            cpar, desc = _dd_principal(inst, c, "gamma")
            return (c.plus("gamma", substitute(desc.body, desc.var, cpar)),)
        case RuleId.IotaL1R:
            cpar, desc = _dd_principal(inst, c, "pi")
            return (c.plus("pi", substitute(desc.body, desc.var, cpar)),)
        case RuleId.IotaL2:
            cpar, desc = _dd_principal(inst, c, "gamma")
            b = _need_param(inst)
            _need_in_gamma(c, Exists(b), "existence atom")
            return (
                c.plus("sigma", substitute(desc.body, desc.var, b)),
                c.plus("gamma", Identity(b, cpar)),
            )
        case RuleId.IotaL2R:
            cpar, desc = _dd_principal(inst, c, "pi")
            b = _need_param(inst)
            _need_in_gamma(c, Exists(b), "existence atom")
            return (
                c.plus("delta", substitute(desc.body, desc.var, b)),
                c.plus("pi", Identity(b, cpar)),
            )
        case RuleId.IotaRR:
            cpar, desc = _dd_principal(inst, c, "sigma")
            a = _need_fresh(inst, c)
            base = c.minus("sigma", Identity(cpar, desc))
            return (
                base.plus("sigma", substitute(desc.body, desc.var, cpar)),
                base.plus("gamma", Exists(Param(a)), substitute(desc.body, desc.var, Param(a)))
                .plus("sigma", Identity(Param(a), cpar)),
            )
        case RuleId.IotaRL:
            cpar, desc = _dd_principal(inst, c, "delta")
            a = _need_fresh(inst, c)
            base = c.minus("delta", Identity(cpar, desc))
            return (
                base.plus("delta", substitute(desc.body, desc.var, cpar)),
                base.plus("gamma", Exists(Param(a)))
                .plus("delta", Identity(Param(a), cpar))
                .plus("pi", substitute(desc.body, desc.var, Param(a))),
            )

    raise CheckFailure("schema", f"{r.value} is not an inference rule")


# ---------------------------------------------------------------------------
# Axiomatic bisequents


def is_axiomatic(b: Bisequent) -> Optional[RuleId]:
    gamma, delta = set(b.gamma), set(b.delta)
    pi, sigma = set(b.pi), set(b.sigma)
    for phi in gamma:
        if is_atomic(phi) and (phi in sigma or phi in delta):
            return RuleId.AxAtom
    for phi in pi:
        if is_atomic(phi) and phi in sigma:
            return RuleId.AxAtom
    for phi in delta:
        if phi not in pi:
            continue
        args = movable_atom_args(phi)
        if args is not None and all(Exists(t) in gamma for t in args):
            return RuleId.AxExistPred
    return None


# ---------------------------------------------------------------------------
# Derivations


@dataclass(frozen=True)
class Derivation:
    conclusion: Bisequent
    rule: RuleId
    instance: Optional[RuleInstance] = None
    premises: tuple["Derivation", ...] = ()

    @property
    def is_axiom(self) -> bool:
        return self.rule in AXIOM_RULES

    def walk(self, path: str = "") -> Iterator[tuple[str, "Derivation"]]:
        yield path, self
        for i, p in enumerate(self.premises):
            yield from p.walk(f"{path}.{i}" if path else str(i))


def axiom(conclusion: Bisequent) -> Derivation:
    kind = is_axiomatic(conclusion)
    if kind is None:
        raise CheckFailure("axiom", f"{conclusion} is not axiomatic")
    return Derivation(conclusion, kind)


def infer(
    conclusion: Bisequent,
    inst: RuleInstance,
    premises: Sequence[Derivation],
    variant: ValuationKind,
) -> Derivation:
    """Build a node, verifying the step against the schema."""
    expected = rule_premises(conclusion, inst, variant)
    got = tuple(p.conclusion for p in premises)
    if got != expected:
        raise CheckFailure(
            "schema-mismatch",
            f"{inst.rule.value}: premises {list(map(str, got))} != expected {list(map(str, expected))}",
        )
    return Derivation(conclusion, inst.rule, inst, tuple(premises))


@lru_cache(maxsize=None)
def height(d: Derivation) -> int:
    if not d.premises:
        return 1
    return 1 + max(height(p) for p in d.premises)


def check_step(
    inst: RuleInstance,
    premises: Sequence[Bisequent],
    conclusion: Bisequent,
    variant: ValuationKind,
) -> Optional[Diagnostic]:
    """None when the premises are exactly the schema images of the
    conclusion under this instance and all side conditions hold."""
    try:
        expected = rule_premises(conclusion, inst, variant)
    except CheckFailure as e:
        return Diagnostic("", e.code, e.detail)
    if len(premises) != len(expected):
        return Diagnostic("", "arity", f"{inst.rule.value} expects {len(expected)} premises")
    if tuple(premises) != expected:
        return Diagnostic(
            "",
            "schema-mismatch",
            f"premises {[str(p) for p in premises]} != {[str(p) for p in expected]}",
        )
    return None


def check_derivation(d: Derivation, variant: ValuationKind) -> list[Diagnostic]:
    """Every leaf must be axiomatic and every inner node a correct step."""
    problems: list[Diagnostic] = []
    if not d.conclusion.is_closed():
        problems.append(Diagnostic("", "open-formula", str(d.conclusion)))
    for path, node in d.walk():
        if node.is_axiom:
            kind = is_axiomatic(node.conclusion)
            if kind is None:
                problems.append(Diagnostic(path, "axiom", f"{node.conclusion} is not axiomatic"))
            elif node.premises:
                problems.append(Diagnostic(path, "arity", "axioms take no premises"))
            continue
        if node.instance is None or node.instance.rule is not node.rule:
            problems.append(Diagnostic(path, "schema", "missing or mismatched instance"))
            continue
        diag = check_step(
            node.instance, [p.conclusion for p in node.premises], node.conclusion, variant
        )
        if diag is not None:
            problems.append(Diagnostic(path, diag.code, diag.detail))
    return problems


# ---------------------------------------------------------------------------
# Backward rule application


def fresh_param(b: Bisequent, extra: Iterator[str] = ()) -> str:
    return fresh_name("a", set(b.parameters()) | set(extra))


def _exists_terms(b: Bisequent) -> list[Term]:
    """Terms t with Et in gamma, in canonical order."""
    out = []
    for f in b.gamma:
        if isinstance(f, Exists) and f.arg not in out:
            out.append(f.arg)
    return sorted(out, key=fmt_term)


def _existing_params(b: Bisequent) -> list[Param]:
    return [t for t in _exists_terms(b) if isinstance(t, Param)]


def backward_applications(
    b: Bisequent,
    variant: ValuationKind,
    with_id3: bool = True,
    max_id3: int = 64,
) -> list[tuple[RuleInstance, tuple[Bisequent, ...]]]:
    """Every way a rule's conclusion schema matches ``b``, with instantiating
    terms drawn from the finite candidate pool occurring in ``b``."""
    out: list[tuple[RuleInstance, tuple[Bisequent, ...]]] = []
    params = _existing_params(b)

    def try_inst(inst: RuleInstance):
        try:
            prems = rule_premises(b, inst, variant)
        except CheckFailure:
            return
        out.append((inst, prems))

    def eigen() -> str:
        return fresh_param(b)

    for zone in ("gamma", "delta", "pi", "sigma"):
        for phi in sorted(set(b.zone(zone)), key=formula_key):
            key = (zone, phi)
            match zone, phi:
                case ("gamma", Not(_)):
                    try_inst(RuleInstance(RuleId.NegLseqL, key))
                case ("delta", Not(_)):
                    try_inst(RuleInstance(RuleId.NegRseqL, key))
                case ("pi", Not(_)):
                    try_inst(RuleInstance(RuleId.NegLseqR, key))
                case ("sigma", Not(_)):
                    try_inst(RuleInstance(RuleId.NegRseqR, key))
                case ("gamma", And(_, _)):
                    try_inst(RuleInstance(RuleId.AndLseqL, key))
                case ("delta", And(_, _)):
                    try_inst(RuleInstance(RuleId.AndRseqL, key))
                case ("pi", And(_, _)):
                    rule = RuleId.AndLseqR if variant is STRONG else RuleId.AndLseqR_w
                    try_inst(RuleInstance(rule, key))
                case ("sigma", And(_, _)):
                    rule = RuleId.AndRseqR if variant is STRONG else RuleId.AndRseqR_w
                    try_inst(RuleInstance(rule, key))
                case ("gamma", Implies(_, _)):
                    rule = RuleId.ImpLseqL if variant is STRONG else RuleId.ImpLseqL_w
                    try_inst(RuleInstance(rule, key))
                case ("delta", Implies(_, _)):
                    rule = RuleId.ImpRseqL if variant is STRONG else RuleId.ImpRseqL_w
                    try_inst(RuleInstance(rule, key))
                case ("pi", Implies(_, _)):
                    try_inst(RuleInstance(RuleId.ImpLseqR, key))
                case ("sigma", Implies(_, _)):
                    try_inst(RuleInstance(RuleId.ImpRseqR, key))
                case ("gamma", Forall(_, _)):
                    for p in params:
                        try_inst(RuleInstance(RuleId.ForallLseqL, key, term=p))
                case ("pi", Forall(_, _)):
                    for p in params:
                        try_inst(RuleInstance(RuleId.ForallLseqR, key, term=p))
                case ("delta", Forall(_, _)):
                    try_inst(RuleInstance(RuleId.ForallRseqL, key, eigen=eigen()))
                case ("sigma", Forall(_, _)):
                    try_inst(RuleInstance(RuleId.ForallRseqR, key, eigen=eigen()))
                case ("delta", Exists(_)):
                    try_inst(RuleInstance(RuleId.ExTr2, key))
                case ("pi", Exists(_)):
                    try_inst(RuleInstance(RuleId.ExTr1, key))
                case ("gamma", Exists(Description(_, _))):
                    try_inst(RuleInstance(RuleId.EIotaRefl, key, eigen=eigen()))
                case ("gamma", Identity(Param(_), Description(_, _))):
                    try_inst(RuleInstance(RuleId.IotaL1, key))
                    for p in params:
                        try_inst(RuleInstance(RuleId.IotaL2, key, term=p))
                case ("pi", Identity(Param(_), Description(_, _))):
                    try_inst(RuleInstance(RuleId.IotaL1R, key))
                    for p in params:
                        try_inst(RuleInstance(RuleId.IotaL2R, key, term=p))
                case ("delta", Identity(Param(_), Description(_, _))):
                    try_inst(RuleInstance(RuleId.IotaRL, key, eigen=eigen()))
                case ("sigma", Identity(Param(_), Description(_, _))):
                    try_inst(RuleInstance(RuleId.IotaRR, key, eigen=eigen()))
            args = movable_atom_args(phi)
            if args is not None:
                if zone == "gamma":
                    for t in dict.fromkeys(args):
                        try_inst(RuleInstance(RuleId.ExLseqL, key, term=t))
                elif zone == "sigma":
                    for t in dict.fromkeys(args):
                        try_inst(RuleInstance(RuleId.ExRseqR, key, term=t))
                elif zone == "pi":
                    try_inst(RuleInstance(RuleId.ExMoveL, key))
                elif zone == "delta":
                    try_inst(RuleInstance(RuleId.ExRintroL, key))

    for t in _exists_terms(b):
        try_inst(RuleInstance(RuleId.IdRefl, term=t))

    if with_id3:
        for spec in id3_candidates(b, max_id3):
            try_inst(RuleInstance(RuleId.IdRight3, id3=spec))
    return out


def id3_candidates(b: Bisequent, cap: int = 64) -> list[Id3Spec]:
    """Terms and atoms already present in the conclusion: for each ordered
    pair (t, s) of existence-prefixed terms and each atom B of the
    bisequent, abstract the occurrences of t (or of s) in B."""
    terms = _exists_terms(b)
    atoms = sorted(
        {f for _, f in b.formulas() if is_atomic(f)}, key=formula_key
    )
    hole = fresh_name("x", {v for f in atoms for v in _all_idents(f)} | set(b.parameters()))
    out: list[Id3Spec] = []
    seen = set()
    for t in terms:
        for s in terms:
            if t == s:
                continue
            for pattern_source, anchor in ((a, term) for a in atoms for term in (t, s)):
                pattern = _abstract(pattern_source, anchor, hole)
                if pattern is None:
                    continue
                for teqs in (Identity(t, s), Identity(s, t)):
                    key = (t, s, teqs, pattern)
                    if key in seen:
                        continue
                    seen.add(key)
                    out.append(Id3Spec(t, s, teqs, hole, pattern))
                    if len(out) >= cap:
                        return out
    return out


def _all_idents(phi: Formula) -> set[str]:
    from .syntax import parameters_of, free_vars

    return set(parameters_of(phi)) | set(free_vars(phi))


def _abstract(atom: Formula, term: Term, hole: str) -> Optional[Formula]:
    """Replace every occurrence of ``term`` at argument positions of an
    atomic formula by the hole variable; None when it does not occur."""
    def swap(t: Term) -> Term:
        return Var(hole) if t == term else t

    match atom:
        case Atom(p, args) if term in args:
            return Atom(p, tuple(swap(t) for t in args))
        case Identity(l, r) if term in (l, r):
            return Identity(swap(l), swap(r))
        case Exists(arg) if arg == term:
            return Exists(Var(hole))
    return None
