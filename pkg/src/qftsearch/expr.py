"""Tensor-expression data model and printer.

Expressions are immutable, hashable trees. Structural equality of two
*canonical* expressions is the engine's equality notion, so every node type
is a frozen dataclass.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterator


class Symmetry(str, Enum):
    NONE = "none"
    SYMMETRIC = "symmetric"
    ANTISYMMETRIC = "antisymmetric"


@dataclass(frozen=True, order=True)
class Index:
    """A Lorentz index slot.

    ``pattern`` marks rule-side index variables (``_a?``). Whether a ground
    index is free or dummy depends on the term it sits in, see
    :func:`qftsearch.canonical.free_indices`.
    """

    name: str
    upper: bool
    pattern: bool = False

    @property
    def concrete(self) -> bool:
        return self.name.isdigit()

    def flipped(self) -> Index:
        return Index(self.name, not self.upper, self.pattern)

    def renamed(self, name: str) -> Index:
        return Index(name, self.upper, self.pattern)

    def __str__(self) -> str:
        return ("^" if self.upper else "_") + self.name + ("?" if self.pattern else "")


@dataclass(frozen=True)
class TensorHead:
    name: str
    arity: int
    symmetry: Symmetry = Symmetry.NONE
    constant: bool = False  # derivative vanishes identically (metric, delta)


ETA = TensorHead("eta", 2, Symmetry.SYMMETRIC, constant=True)
DELTA = TensorHead("delta", 2, Symmetry.SYMMETRIC, constant=True)
FIELD_STRENGTH = TensorHead("F", 2, Symmetry.ANTISYMMETRIC)
GAUGE_FIELD = TensorHead("A", 1)

BUILTIN_HEADS = {h.name: h for h in (ETA, DELTA, FIELD_STRENGTH, GAUGE_FIELD)}
METRIC_NAMES = frozenset({"eta", "delta"})


class HeadRegistry:
    """Known tensor heads; unknown heads are registered on first use."""

    def __init__(self, heads: dict[str, TensorHead] | None = None):
        self._heads = dict(BUILTIN_HEADS)
        if heads:
            self._heads.update(heads)

    def __contains__(self, name: str) -> bool:
        return name in self._heads

    def get(self, name: str) -> TensorHead | None:
        return self._heads.get(name)

    def register(self, head: TensorHead) -> TensorHead:
        self._heads[head.name] = head
        return head

    def lookup(self, name: str, arity: int) -> TensorHead:
        head = self._heads.get(name)
        if head is None:
            head = self.register(TensorHead(name, arity))
        return head

    def copy(self) -> HeadRegistry:
        return HeadRegistry(dict(self._heads))


class Expr:
    """Base class of all expression nodes."""

    __slots__ = ()

    def children(self) -> tuple[Expr, ...]:
        return ()

    def walk(self) -> Iterator[Expr]:
        yield self
        for child in self.children():
            yield from child.walk()

    def all_indices(self) -> Iterator[Index]:
        """All index occurrences, in traversal order."""
        for node in self.walk():
            if isinstance(node, Atom):
                yield from node.indices
            elif isinstance(node, Partial):
                yield node.index

    def node_count(self) -> int:
        return sum(1 for _ in self.walk())

    @property
    def is_zero(self) -> bool:
        return False

    def __str__(self) -> str:
        return to_text(self)


@dataclass(frozen=True)
class Num(Expr):
    value: Fraction

    def __post_init__(self):
        if not isinstance(self.value, Fraction):
            object.__setattr__(self, "value", Fraction(self.value))

    @property
    def is_zero(self) -> bool:
        return self.value == 0


@dataclass(frozen=True)
class Atom(Expr):
    head: TensorHead
    indices: tuple[Index, ...] = ()

    def __post_init__(self):
        if len(self.indices) != self.head.arity:
            raise ValueError(
                f"head {self.head.name} expects {self.head.arity} indices, got {len(self.indices)}"
            )

    @property
    def name(self) -> str:
        return self.head.name


@dataclass(frozen=True)
class Partial(Expr):
    index: Index
    operand: Expr

    def children(self):
        return (self.operand,)


@dataclass(frozen=True)
class Product(Expr):
    coefficient: Fraction
    factors: tuple[Expr, ...]

    def __post_init__(self):
        if not isinstance(self.coefficient, Fraction):
            object.__setattr__(self, "coefficient", Fraction(self.coefficient))

    def children(self):
        return self.factors


@dataclass(frozen=True)
class Sum(Expr):
    terms: tuple[Expr, ...] = ()

    def children(self):
        return self.terms

    @property
    def is_zero(self) -> bool:
        return not self.terms


@dataclass(frozen=True)
class Var(Expr):
    """Pattern variable. ``sequence`` variables (``xs??``) absorb any
    sub-multiset of the remaining factors of a product."""

    name: str
    sequence: bool = False


ZERO = Sum(())
ONE = Num(Fraction(1))


def num(value) -> Expr:
    value = Fraction(value)
    return ZERO if value == 0 else Num(value)


def product(coefficient, factors) -> Expr:
    """Build a product, collapsing the trivial shapes."""
    coefficient = Fraction(coefficient)
    factors = tuple(factors)
    if coefficient == 0:
        return ZERO
    if not factors:
        return Num(coefficient)
    if coefficient == 1 and len(factors) == 1:
        return factors[0]
    return Product(coefficient, factors)


def add(terms) -> Expr:
    terms = tuple(t for t in terms if not t.is_zero)
    if not terms:
        return ZERO
    if len(terms) == 1:
        return terms[0]
    return Sum(terms)


def has_pattern_vars(e: Expr) -> bool:
    return any(isinstance(n, Var) for n in e.walk()) or any(i.pattern for i in e.all_indices())


def split_coefficient(e: Expr) -> tuple[Fraction, tuple[Expr, ...]]:
    """View ``e`` as coefficient times a factor tuple."""
    if isinstance(e, Product):
        return e.coefficient, e.factors
    if isinstance(e, Num):
        return e.value, ()
    return Fraction(1), (e,)


# -- printing ---------------------------------------------------------------


def _format_fraction(value: Fraction) -> str:
    return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"


def _atom_text(a: Atom) -> str:
    if not a.indices:
        return a.head.name
    return f"{a.head.name}[{','.join(str(i) for i in a.indices)}]"


def _factor_text(e: Expr) -> str:
    if isinstance(e, (Sum, Product)) or (isinstance(e, Num) and e.value < 0):
        return f"({to_text(e)})"
    return to_text(e)


def _product_body(e: Product) -> tuple[bool, str]:
    """Return (negative, text without the leading sign)."""
    coeff = e.coefficient
    negative = coeff < 0
    magnitude = -coeff if negative else coeff
    parts = [_factor_text(f) for f in e.factors]
    if magnitude != 1 or not parts:
        parts.insert(0, _format_fraction(magnitude))
    return negative, "*".join(parts)


def to_text(e: Expr) -> str:
    """Print ``e`` in the expression grammar accepted by the parser."""
    if isinstance(e, Num):
        return _format_fraction(e.value)
    if isinstance(e, Atom):
        return _atom_text(e)
    if isinstance(e, Var):
        return e.name + ("??" if e.sequence else "?")
    if isinstance(e, Partial):
        return f"d[{e.index}]({to_text(e.operand)})"
    if isinstance(e, Product):
        negative, body = _product_body(e)
        return ("-" if negative else "") + body
    if isinstance(e, Sum):
        if not e.terms:
            return "0"
        out = []
        for k, term in enumerate(e.terms):
            if isinstance(term, Product):
                negative, body = _product_body(term)
            elif isinstance(term, Num) and term.value < 0:
                negative, body = True, _format_fraction(-term.value)
            else:
                negative, body = False, (f"({to_text(term)})" if isinstance(term, Sum) else to_text(term))
            if k == 0:
                out.append(("-" if negative else "") + body)
            else:
                out.append((" - " if negative else " + ") + body)
        return "".join(out)
    raise TypeError(f"not an expression: {e!r}")


__all__ = [
    "Symmetry", "Index", "TensorHead", "HeadRegistry", "Expr", "Num", "Atom", "Partial",
    "Product", "Sum", "Var", "ZERO", "ONE", "ETA", "DELTA", "FIELD_STRENGTH", "GAUGE_FIELD",
    "BUILTIN_HEADS", "METRIC_NAMES", "num", "product", "add", "has_pattern_vars",
    "split_coefficient", "to_text",
]
