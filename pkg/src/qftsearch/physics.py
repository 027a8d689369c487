"""Classical field theories: Lagrangians, energy-momentum tensors, conservation.

A theory is read from a small ``.theory`` file::

    name free-em
    field A[1]
    define F[_a,_b] := d[_a](A[_b]) - d[_b](A[_a])
    lagrangian -1/4*F[_mu,_nu]*F[^mu,^nu]
    eom-rule eom: d[_a?](F[^a?,^b?]) -> 0
    improvement d[_lam](F[^mu,^lam]*A[^nu])

``parameter m`` declares a coordinate independent nullary constant.
``improvement`` gives the total-derivative term that symmetrizes the
canonical tensor; a theory without one cannot be symmetrized.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from .canonical import (
    DEFAULT_DIMENSION, IndexStructureError, canonicalize, free_indices, terms_of,
)
from .components import Definition, expand_components
from .expr import (
    Atom, ETA, Expr, HeadRegistry, Index, Partial, Product, Sum, TensorHead, add, product,
    split_coefficient,
)
from .parser import ParseError, parse_expr
from .rules import Rule, RuleError, RuleSet, parse_rule_line, seed_rules, successors
from .search import (
    DerivationState, Found, IsZero, SearchBudget, SearchStats, SymmetricIn, search,
)


class TheoryError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = f"{source or '<theory>'}:{line}: " if line else ""
        super().__init__(where + message)


@dataclass(frozen=True)
class FieldTheory:
    name: str
    fields: tuple[TensorHead, ...]
    lagrangian: Expr
    definitions: dict = field(default_factory=dict, hash=False, compare=False)
    eom_rules: RuleSet = RuleSet()
    parameters: frozenset = frozenset()
    improvement: Expr | None = None
    registry: HeadRegistry = field(default_factory=HeadRegistry, hash=False, compare=False)

    def get_field(self, name: str) -> TensorHead:
        for f in self.fields:
            if f.name == name:
                return f
        raise TheoryError(f"{name} is not a field of theory {self.name}")

    def rules(self, base: RuleSet | None = None) -> RuleSet:
        """``base`` (default: the seed rules) plus the theory's own rules."""
        base = base if base is not None else seed_rules(self.registry)
        return base.merged(self.eom_rules)

    def components(self, e: Expr, dim: int = DEFAULT_DIMENSION, order=None):
        """Component table of ``e`` with this theory's definitions expanded."""
        return expand_components(
            e, dim, definitions=self.definitions, parameters=self.parameters, order=order,
        )


_FIELD = re.compile(r"^([A-Za-z]\w*)\s*\[\s*(\d+)\s*\]$")
_DEFINE = re.compile(r"^([A-Za-z]\w*)\s*(?:\[([^\]]*)\])?\s*:=\s*(.+)$")


def load_theory(text: str, source: str = "<theory>") -> FieldTheory:
    """Parse and validate a ``.theory`` file."""
    registry = HeadRegistry()
    name = None
    fields: list[TensorHead] = []
    definitions: dict[str, Definition] = {}
    parameters: set[str] = set()
    lagrangian = None
    improvement = None
    eom_lines: list[tuple[int, str]] = []

    def expr(body: str, n: int) -> Expr:
        try:
            return parse_expr(body, registry)
        except ParseError as err:
            raise TheoryError(str(err), n, source) from None

    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, body = line.partition(" ")
        body = body.strip()
        if key == "name" and body:
            name = body
        elif key == "field":
            m = _FIELD.match(body)
            if not m:
                raise TheoryError(f"expected 'field Head[arity]', got {body!r}", n, source)
            head_name, arity = m.group(1), int(m.group(2))
            known = registry.get(head_name)
            if known is not None and known.arity != arity:
                raise TheoryError(f"field {head_name} has arity {known.arity}, not {arity}", n, source)
            fields.append(known or registry.register(TensorHead(head_name, arity)))
        elif key == "parameter" and body:
            for p in body.replace(",", " ").split():
                if p in registry:
                    raise TheoryError(f"parameter {p} clashes with a known head", n, source)
                registry.register(TensorHead(p, 0, constant=True))
                parameters.add(p)
        elif key == "define":
            m = _DEFINE.match(body)
            if not m:
                raise TheoryError(f"expected 'define Head[slots] := expr', got {body!r}", n, source)
            head_name, slot_text, rhs = m.groups()
            try:
                slots = tuple(_slot(s) for s in (slot_text or "").split(",") if s.strip())
            except ValueError as err:
                raise TheoryError(str(err), n, source) from None
            definition_body = expr(rhs, n)
            if free_indices(definition_body) != frozenset(slots):
                raise TheoryError(f"definition of {head_name} does not carry exactly its slots", n, source)
            known = registry.get(head_name)
            if known is not None and known.arity != len(slots):
                raise TheoryError(f"{head_name} has arity {known.arity}, not {len(slots)}", n, source)
            if known is None:
                registry.register(TensorHead(head_name, len(slots)))
            definitions[head_name] = Definition(slots, definition_body)
        elif key == "lagrangian" and body:
            lagrangian = expr(body, n)
        elif key == "improvement" and body:
            improvement = expr(body, n)
        elif key == "eom-rule" and body:
            eom_lines.append((n, body))
        else:
            raise TheoryError(f"unrecognised line {line!r}", n, source)

    if lagrangian is None:
        raise TheoryError("theory has no lagrangian", source=source)
    if not fields:
        raise TheoryError("theory declares no fields", source=source)
    try:
        if free_indices(lagrangian):
            raise TheoryError("lagrangian is not a scalar", source=source)
    except IndexStructureError as err:
        raise TheoryError(f"lagrangian: {err}", source=source) from None
    expanded = expand_definitions(lagrangian, definitions)
    present = {a.head.name for a in expanded.walk() if isinstance(a, Atom)}
    for f in fields:
        if f.name not in present:
            raise TheoryError(f"field {f.name} does not occur in the lagrangian", source=source)
    rules: list[Rule] = []
    for n, body in eom_lines:
        try:
            rules.extend(parse_rule_line(body, registry, line=n, source=source))
        except RuleError as err:
            raise TheoryError(str(err)) from None
    try:
        eom = RuleSet(tuple(rules), (source,) if rules else ())
    except RuleError as err:
        raise TheoryError(str(err), source=source) from None
    if improvement is not None:
        try:
            bad = free_indices(improvement) != {Index("mu", True), Index("nu", True)}
        except IndexStructureError as err:
            raise TheoryError(f"improvement: {err}", source=source) from None
        if bad:
            raise TheoryError("improvement term must carry exactly ^mu, ^nu", source=source)
    return FieldTheory(
        name or Path(source).stem, tuple(fields), lagrangian, definitions, eom,
        frozenset(parameters), improvement, registry,
    )


def _slot(text: str) -> Index:
    text = text.strip()
    if len(text) < 2 or text[0] not in "^_":
        raise ValueError(f"bad definition slot {text!r}")
    return Index(text[1:], text[0] == "^")


def read_theory(path: str | Path) -> FieldTheory:
    p = Path(path)
    return load_theory(p.read_text(encoding="utf-8"), source=str(p))


def packaged_theory(name: str) -> FieldTheory:
    """A theory shipped with the package, e.g. ``free-em``."""
    from .rules import data_text

    if not name.endswith(".theory"):
        name += ".theory"
    return load_theory(data_text(name), source=name)


# -- definitions --------------------------------------------------------------


def _names(e: Expr) -> set[str]:
    return {i.name for i in e.all_indices()}


def expand_definitions(e: Expr, definitions: dict[str, Definition]) -> Expr:
    """Replace every defined head by its definition (no canonicalization)."""
    if not definitions:
        return e
    taken = _names(e)

    def unfold(a: Atom) -> Expr:
        d = definitions[a.head.name]
        slots = {s.name: (s, actual) for s, actual in zip(d.slots, a.indices)}
        inner: dict[str, str] = {}
        for i in d.body.all_indices():
            if i.name not in slots and i.name not in inner and not i.concrete:
                k = 1
                while f"{i.name}{k}" in taken:
                    k += 1
                inner[i.name] = f"{i.name}{k}"
                taken.add(inner[i.name])

        def idx(i: Index) -> Index:
            if i.name in slots:
                s, actual = slots[i.name]
                return actual if i.upper == s.upper else actual.flipped()
            if i.name in inner:
                return i.renamed(inner[i.name])
            return i

        return _map_indices(d.body, idx)

    def walk(x: Expr) -> Expr:
        if isinstance(x, Atom):
            return unfold(x) if x.head.name in definitions else x
        if isinstance(x, Partial):
            return Partial(x.index, walk(x.operand))
        if isinstance(x, Product):
            return Product(x.coefficient, tuple(walk(f) for f in x.factors))
        if isinstance(x, Sum):
            return Sum(tuple(walk(t) for t in x.terms))
        return x

    return walk(e)


def _map_indices(e: Expr, fn) -> Expr:
    if isinstance(e, Atom):
        return Atom(e.head, tuple(fn(i) for i in e.indices))
    if isinstance(e, Partial):
        return Partial(fn(e.index), _map_indices(e.operand, fn))
    if isinstance(e, Product):
        return Product(e.coefficient, tuple(_map_indices(f, fn) for f in e.factors))
    if isinstance(e, Sum):
        return Sum(tuple(_map_indices(t, fn) for t in e.terms))
    return e


def fold_rules(definitions: dict[str, Definition], registry: HeadRegistry) -> RuleSet:
    """Directed rules ``body -> head`` for every definition."""
    rules = []
    for name, d in definitions.items():
        slot_names = {s.name for s in d.slots}

        def pat(i: Index) -> Index:
            return Index(i.name, i.upper, True) if i.name in slot_names else i

        head = registry.get(name)
        lhs = _map_indices(d.body, pat)
        rhs = Atom(head, tuple(Index(s.name, s.upper, True) for s in d.slots))
        rules.append(Rule(f"fold-{name}", lhs, rhs))
    return RuleSet(tuple(rules))


def fold_definitions(e: Expr, t: FieldTheory, dim: int = DEFAULT_DIMENSION) -> Expr:
    """Greedily rewrite expanded definitions back into their heads."""
    rs = fold_rules(t.definitions, t.registry)
    e = canonicalize(e, dim)
    while True:
        smaller = [n for n, _ in successors(e, rs, dim) if n.node_count() < e.node_count()]
        if not smaller:
            return e
        e = smaller[0]


def _leibniz(e: Expr) -> Expr:
    """Push every derivative through products, down to single atoms."""
    if isinstance(e, Sum):
        return Sum(tuple(_leibniz(t) for t in e.terms))
    if isinstance(e, Product):
        return Product(e.coefficient, tuple(_leibniz(f) for f in e.factors))
    if isinstance(e, Partial):
        inner = _leibniz(e.operand)
        if isinstance(inner, Sum):
            return Sum(tuple(_leibniz(Partial(e.index, t)) for t in inner.terms))
        if isinstance(inner, Product):
            fs = inner.factors
            return Sum(tuple(
                Product(inner.coefficient, fs[:k] + (_leibniz(Partial(e.index, fs[k])),) + fs[k + 1:])
                for k in range(len(fs))
            ))
        return Partial(e.index, inner)
    return e


# -- variational derivative ----------------------------------------------------


def variational_derivative(
    L: Expr,
    field_head: TensorHead,
    *,
    definitions: dict[str, Definition] | None = None,
    wrt: tuple[str, ...] = ("mu", "nu"),
    dim: int = DEFAULT_DIMENSION,
) -> Expr:
    """dL/d(d_mu field_nu...) with every distinct first derivative of the
    field treated as an independent symbol.

    The result carries ``^wrt[0]`` for the derivative slot followed by one
    upper index per field slot; arity-0 fields only use ``wrt[0]``. Defined
    heads are expanded before differentiating and the result is left
    expanded; see :func:`fold_definitions`.
    """
    try:
        if free_indices(L):
            raise ValueError("lagrangian is not a scalar")
    except IndexStructureError as err:
        raise ValueError(f"lagrangian: {err}") from None
    if len(wrt) < 1 + field_head.arity:
        raise ValueError(f"need {1 + field_head.arity} index names, got {len(wrt)}")
    deriv_name, slot_names = wrt[0], wrt[1:1 + field_head.arity]
    expanded = canonicalize(_leibniz(expand_definitions(L, definitions or {})), dim)
    clash = _names(expanded) & set(wrt)
    if clash:
        raise ValueError(f"index name(s) {', '.join(sorted(clash))} already used in the lagrangian")

    def target(f: Expr) -> bool:
        return (
            isinstance(f, Partial)
            and isinstance(f.operand, Atom)
            and f.operand.head.name == field_head.name
        )

    out = []
    for term in terms_of(expanded):
        c, factors = split_coefficient(term)
        for k, f in enumerate(factors):
            if not target(f):
                continue
            deltas = [Atom(ETA, (Index(deriv_name, True), f.index))]
            deltas += [
                Atom(ETA, (Index(n, True), i)) for n, i in zip(slot_names, f.operand.indices)
            ]
            out.append(product(c, factors[:k] + factors[k + 1:] + tuple(deltas)))
    return canonicalize(add(out), dim)


# -- energy-momentum tensor ------------------------------------------------------


@dataclass(frozen=True)
class TEMResult:
    tensor: Expr
    variant: str  # "canonical" | "symmetrized"
    derivation: DerivationState | None = None
    start: Expr | None = None
    indices: tuple[str, str] = ("mu", "nu")
    stats: SearchStats | None = field(default=None, compare=False)

    def __post_init__(self):
        want = {Index(self.indices[0], True), Index(self.indices[1], True)}
        if not self.tensor.is_zero and free_indices(self.tensor) != want:
            raise TheoryError(f"energy-momentum tensor must carry ^{self.indices[0]}, ^{self.indices[1]}")


_SLOT_NAMES = ("lam", "sig", "rho", "kap", "tau")


def canonical_tem(t: FieldTheory, dim: int = DEFAULT_DIMENSION) -> TEMResult:
    """T^{mu nu} = sum over fields of dL/d(d_mu f) d^nu f - eta^{mu nu} L."""
    mu, nu = "mu", "nu"
    pieces: list[Expr] = []
    for f in t.fields:
        slots = _SLOT_NAMES[:f.arity]
        try:
            p = variational_derivative(
                t.lagrangian, f, definitions=t.definitions, wrt=(mu,) + slots, dim=dim,
            )
        except ValueError as err:
            raise TheoryError(str(err)) from None
        grad = Partial(Index(nu, True), Atom(f, tuple(Index(s, False) for s in slots)))
        pieces.append(product(1, (p, grad)) if not p.is_zero else p)
    pieces.append(product(-1, (Atom(ETA, (Index(mu, True), Index(nu, True))), t.lagrangian)))
    tensor = fold_definitions(add(pieces), t, dim) if t.definitions else canonicalize(add(pieces), dim)
    return TEMResult(tensor, "canonical")


@dataclass
class Conserved:
    state: DerivationState
    start: Expr
    stats: SearchStats


@dataclass
class NotShown:
    """Search gave up: a budget or exhaustion report, not a disproof."""

    stats: SearchStats
    reason: str
    start: Expr


ConservationResult = Union[Conserved, NotShown]


def divergence(T: TEMResult) -> Expr:
    return Partial(Index(T.indices[0], False), T.tensor)


def check_conservation(
    T: TEMResult,
    t: FieldTheory,
    rs: RuleSet | None = None,
    budget: SearchBudget | None = None,
    dim: int = DEFAULT_DIMENSION,
) -> ConservationResult:
    """Search for a derivation of d_mu T^{mu nu} = 0."""
    rs = rs if rs is not None else t.rules()
    start = canonicalize(divergence(T), dim)
    result = search(start, rs, IsZero(), budget, dim)
    if isinstance(result, Found):
        return Conserved(result.state, start, result.stats)
    reason = "exhausted" if result.status == "exhausted" else f"budget ({result.limit})"
    return NotShown(result.stats, reason, start)


class SymmetrizationError(TheoryError):
    """Raised on misuse, or with ``stats`` set when the search gave up."""

    def __init__(self, message: str, stats: SearchStats | None = None):
        super().__init__(message)
        self.stats = stats


def symmetrize_tem(
    T: TEMResult,
    t: FieldTheory,
    rs: RuleSet | None = None,
    budget: SearchBudget | None = None,
    dim: int = DEFAULT_DIMENSION,
) -> TEMResult:
    """Add the theory's improvement term and search for a form symmetric in
    the two indices, using the equations of motion only as rules."""
    if T.variant != "canonical":
        raise SymmetrizationError("tensor is already symmetrized")
    if t.improvement is None:
        raise SymmetrizationError(f"theory {t.name} has no improvement term")
    rs = rs if rs is not None else t.rules()
    start = canonicalize(add([T.tensor, t.improvement]), dim)
    result = search(start, rs, SymmetricIn(*T.indices), budget, dim)
    if not isinstance(result, Found):
        raise SymmetrizationError(f"no symmetric form found ({result.status})", result.stats)
    return TEMResult(result.state.expr, "symmetrized", result.state, start, T.indices, result.stats)


__all__ = [
    "FieldTheory", "TheoryError", "load_theory", "read_theory", "packaged_theory",
    "expand_definitions", "fold_definitions", "fold_rules", "variational_derivative",
    "TEMResult", "canonical_tem", "Conserved", "NotShown", "check_conservation",
    "divergence", "symmetrize_tem", "SymmetrizationError",
]
