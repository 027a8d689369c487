"""Component expansion: the brute-force oracle.

Every dummy index is summed over ``0..D-1`` and every tensor atom is mapped to
formal component symbols, so two expressions that are equal as tensors have
identical component tables. Nothing here touches the canonicalizer or the
rewrite engine; the oracle only shares the data model and the parser.

Component symbols are always stored with lower indices. ``A_{i}`` is the
field itself, ``dA_{j,i}`` is its first derivative along ``j`` and
``ddA_{j,k,i}`` the second, derivative slots sorted since partials commute.
Metric signature is diag(+1, -1, -1, -1, ...).
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .expr import (
    Atom, Expr, HeadRegistry, Index, Num, Partial, Product, Sum, Symmetry, Var,
)

Symbol = tuple  # (head name, derivative slots, index values)
Monomial = tuple  # sorted tuple of (Symbol, power)


class ComponentError(ValueError):
    pass


class Poly:
    """Sparse multivariate polynomial with exact rational coefficients."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[Monomial, Fraction] | None = None):
        self.terms: dict[Monomial, Fraction] = {
            m: Fraction(c) for m, c in (terms or {}).items() if c != 0
        }

    @classmethod
    def const(cls, value) -> Poly:
        return cls({(): Fraction(value)})

    @classmethod
    def symbol(cls, sym: Symbol, coefficient=1) -> Poly:
        return cls({((sym, 1),): Fraction(coefficient)})

    def __bool__(self) -> bool:
        return bool(self.terms)

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = Poly.const(other)
        return isinstance(other, Poly) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __add__(self, other: Poly) -> Poly:
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0) + c
        return Poly(out)

    def __neg__(self) -> Poly:
        return Poly({m: -c for m, c in self.terms.items()})

    def __sub__(self, other: Poly) -> Poly:
        return self + (-other)

    def scale(self, factor) -> Poly:
        if factor == 0:
            return Poly()
        return Poly({m: c * factor for m, c in self.terms.items()})

    def __mul__(self, other: Poly) -> Poly:
        out: dict[Monomial, Fraction] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = _mono_mul(m1, m2)
                out[m] = out.get(m, 0) + c1 * c2
        return Poly(out)

    def derivative(self, direction: int, max_depth: int) -> Poly:
        """Total derivative along coordinate ``direction``."""
        out: dict[Monomial, Fraction] = {}
        for mono, c in self.terms.items():
            for k, (sym, power) in enumerate(mono):
                head, derivs, idx = sym
                if head == "":  # parameters carry no coordinate dependence
                    continue
                if len(derivs) + 1 > max_depth:
                    raise ComponentError(f"derivative depth exceeds {max_depth}")
                dsym = (head, tuple(sorted(derivs + (direction,))), idx)
                rest = list(mono[:k]) + ([(sym, power - 1)] if power > 1 else []) + list(mono[k + 1:])
                m = _mono_mul(tuple(rest), ((dsym, 1),))
                out[m] = out.get(m, 0) + c * power
        return Poly(out)

    def diff(self, sym: Symbol) -> Poly:
        """Formal partial derivative with respect to one component symbol."""
        out: dict[Monomial, Fraction] = {}
        for mono, c in self.terms.items():
            for k, (s, power) in enumerate(mono):
                if s != sym:
                    continue
                rest = mono[:k] + (((s, power - 1),) if power > 1 else ()) + mono[k + 1:]
                out[rest] = out.get(rest, 0) + c * power
        return Poly(out)

    def symbols(self) -> set:
        return {s for mono in self.terms for s, _ in mono}

    def __repr__(self) -> str:
        return f"Poly({self})"

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for mono in sorted(self.terms):
            c = self.terms[mono]
            body = "*".join(
                symbol_name(s) + (f"^{p}" if p > 1 else "") for s, p in mono
            )
            sign = "-" if c < 0 else "+"
            mag = abs(c)
            if not body:
                text = str(mag)
            elif mag == 1:
                text = body
            else:
                text = f"{mag}*{body}"
            parts.append((sign, text))
        first_sign, first = parts[0]
        out = ("-" if first_sign == "-" else "") + first
        for sign, text in parts[1:]:
            out += f" {sign} {text}"
        return out


def _mono_mul(m1: Monomial, m2: Monomial) -> Monomial:
    counts = Counter(dict(m1))
    for s, p in m2:
        counts[s] += p
    return tuple(sorted(counts.items()))


def symbol_name(sym: Symbol) -> str:
    head, derivs, idx = sym
    if head == "":
        return idx[0]  # a named parameter
    slots = derivs + idx
    prefix = "d" * len(derivs) + head
    if not slots:
        return prefix
    if len(slots) == 1:
        return f"{prefix}_{slots[0]}"
    return f"{prefix}_{{{','.join(map(str, slots))}}}"


def _sig(value: int) -> int:
    return 1 if value == 0 else -1


@dataclass(frozen=True)
class Definition:
    """``head[slots] := body``; slot variances say what ``body`` represents."""

    slots: tuple[Index, ...]
    body: Expr


def standard_definitions(registry: HeadRegistry | None = None) -> dict[str, Definition]:
    from .parser import parse_expr

    body = parse_expr("d[_a](A[_b]) - d[_b](A[_a])", registry)
    return {"F": Definition((Index("a", False), Index("b", False)), body)}


@dataclass
class ComponentTable:
    """One polynomial per assignment of values to the free indices."""

    dimension: int
    indices: tuple[Index, ...]
    entries: dict[tuple[int, ...], Poly] = field(default_factory=dict)

    def entry(self, **values: int) -> Poly:
        key = tuple(values[i.name] for i in self.indices)
        return self.entries.get(key, Poly())

    def aligned(self, order: tuple[Index, ...]) -> dict[tuple[int, ...], Poly]:
        pos = [self.indices.index(i) for i in order]
        return {
            tuple(key[p] for p in pos): poly for key, poly in self.entries.items() if poly
        }

    def __eq__(self, other) -> bool:
        if not isinstance(other, ComponentTable):
            return NotImplemented
        if self.dimension != other.dimension:
            return False
        if self.is_zero() or other.is_zero():
            # a vanishing tensor equals zero of any rank
            return self.is_zero() and other.is_zero()
        if set(self.indices) != set(other.indices):
            return False
        return self.aligned(self.indices) == other.aligned(self.indices)

    def differences(self, other: ComponentTable) -> list[tuple[tuple[int, ...], Poly]]:
        mine = self.aligned(self.indices)
        theirs = other.aligned(self.indices)
        out = []
        for key in sorted(set(mine) | set(theirs)):
            diff = mine.get(key, Poly()) - theirs.get(key, Poly())
            if diff:
                out.append((key, diff))
        return out

    def is_zero(self) -> bool:
        return not any(self.entries.values())


class _Expander:
    def __init__(self, dim: int, definitions: Mapping[str, Definition], max_depth: int,
                 parameters: frozenset[str]):
        self.dim = dim
        self.definitions = definitions
        self.max_depth = max_depth
        self.parameters = parameters

    def open_names(self, e: Expr) -> list[Index]:
        """Index occurrences of ``e`` not contracted inside ``e``."""
        if isinstance(e, Atom):
            occ = list(e.indices)
        elif isinstance(e, Partial):
            occ = [e.index, *self.open_names(e.operand)]
        elif isinstance(e, Product):
            occ = [i for f in e.factors for i in self.open_names(f)]
        elif isinstance(e, Sum):
            for t in e.terms:
                if not (isinstance(t, Num) and t.value == 0):
                    return self.open_names(t)
            return []
        else:
            return []
        counts = Counter(i.name for i in occ if not i.concrete)
        return [i for i in occ if not i.concrete and counts[i.name] == 1]

    def contracted(self, occ: list[Index], env: Mapping[str, int]) -> list[str]:
        counts = Counter(i.name for i in occ if not i.concrete and i.name not in env)
        return sorted(n for n, c in counts.items() if c == 2)

    def value(self, i: Index, env: Mapping[str, int]) -> int:
        if i.concrete:
            v = int(i.name)
            if v >= self.dim:
                raise ComponentError(f"index value {v} out of range for D={self.dim}")
            return v
        try:
            return env[i.name]
        except KeyError:
            raise ComponentError(f"unbound index {i.name}") from None

    def summed(self, names: list[str], env: Mapping[str, int], body) -> Poly:
        if not names:
            return body(env)
        total = Poly()
        for values in itertools.product(range(self.dim), repeat=len(names)):
            total = total + body({**env, **dict(zip(names, values))})
        return total

    def eval(self, e: Expr, env: Mapping[str, int]) -> Poly:
        if isinstance(e, Num):
            return Poly.const(e.value)
        if isinstance(e, Sum):
            total = Poly()
            for t in e.terms:
                total = total + self.eval(t, env)
            return total
        if isinstance(e, Product):
            occ = [i for f in e.factors for i in self.open_names(f)]
            names = self.contracted(occ, env)

            def body(env2):
                out = Poly.const(e.coefficient)
                for f in e.factors:
                    if not out:
                        break
                    out = out * self.eval(f, env2)
                return out

            return self.summed(names, env, body)
        if isinstance(e, Partial):
            occ = [e.index, *self.open_names(e.operand)]
            names = self.contracted(occ, env)

            def body(env2):
                v = self.value(e.index, env2)
                inner = self.eval(e.operand, env2).derivative(v, self.max_depth)
                return inner.scale(_sig(v)) if e.index.upper else inner

            return self.summed(names, env, body)
        if isinstance(e, Atom):
            names = self.contracted(list(e.indices), env)
            return self.summed(names, env, lambda env2: self.atom(e, env2))
        if isinstance(e, Var):
            raise ComponentError("pattern variables have no components")
        raise ComponentError(f"unsupported node {e!r}")

    def atom(self, a: Atom, env: Mapping[str, int]) -> Poly:
        values = [self.value(i, env) for i in a.indices]
        raise_sign = 1
        for i, v in zip(a.indices, values):
            if i.upper:
                raise_sign *= _sig(v)
        name = a.head.name
        if name in ("eta", "delta"):
            i, j = values
            return Poly.const(_sig(i) * raise_sign if i == j else 0)
        if name in self.definitions:
            d = self.definitions[name]
            sub_env = {s.name: v for s, v in zip(d.slots, values)}
            # lower the declared slots, then raise the ones written upper
            sign = raise_sign
            for s, v in zip(d.slots, values):
                if s.upper:
                    sign *= _sig(v)
            return self.eval(d.body, sub_env).scale(sign)
        if name in self.parameters:
            if a.indices:
                raise ComponentError(f"parameter {name} cannot carry indices")
            return Poly.symbol(("", (), (name,)))
        sign = raise_sign
        sym = a.head.symmetry
        if sym is not Symmetry.NONE and len(values) > 1:
            order = sorted(range(len(values)), key=lambda n: values[n])
            sorted_values = [values[n] for n in order]
            if sym is Symmetry.ANTISYMMETRIC:
                if len(set(values)) < len(values):
                    return Poly()
                inversions = sum(
                    1 for x in range(len(order)) for y in range(x + 1, len(order)) if order[x] > order[y]
                )
                sign *= -1 if inversions % 2 else 1
            values = sorted_values
        return Poly.symbol((name, (), tuple(values)), sign)


def expand_components(
    e: Expr,
    dim: int = 4,
    *,
    definitions: Mapping[str, Definition] | None = None,
    max_depth: int = 2,
    parameters: frozenset[str] = frozenset(),
    order: tuple[Index, ...] | None = None,
) -> ComponentTable:
    """Expand ``e`` into explicit components at dimension ``dim``.

    ``definitions`` maps derived heads to their definitions (default: the
    field strength in terms of ``A``). ``parameters`` names nullary heads
    that are coordinate independent constants (masses, couplings).
    """
    if definitions is None:
        definitions = standard_definitions()
    ex = _Expander(dim, definitions, max_depth, parameters)
    free = ex.open_names(e)
    if isinstance(e, Sum):
        for t in e.terms:
            other = ex.open_names(t)
            if set(other) != set(free) and not (isinstance(t, Num) and t.value == 0):
                raise ComponentError("inconsistent free indices across sum terms")
    free_order = tuple(order) if order is not None else tuple(sorted(set(free), key=lambda i: (i.name, i.upper)))
    if set(free_order) != set(free):
        raise ComponentError("requested index order does not match the free indices")
    entries = {}
    for values in itertools.product(range(dim), repeat=len(free_order)):
        env = {i.name: v for i, v in zip(free_order, values)}
        poly = ex.eval(e, env)
        if poly:
            entries[values] = poly
    return ComponentTable(dim, free_order, entries)


__all__ = [
    "Poly", "ComponentTable", "ComponentError", "Definition", "expand_components",
    "standard_definitions", "symbol_name",
]
