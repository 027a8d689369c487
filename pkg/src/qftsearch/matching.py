"""Pattern matching against canonical subjects and template instantiation.

Index variables are covariant: a pattern slot ``_a?`` that meets ``^mu``
binds ``a`` to ``^mu`` and the same variable written ``^a?`` then stands for
``_mu``. Bindings always record what the *lower* spelling ``_a?`` denotes.
Raising and lowering commute with every metric-covariant identity, so a rule
written with lower indices also fires on the raised forms the canonicalizer
produces.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from fractions import Fraction
from typing import Iterator, Union

from .canonical import (
    DEFAULT_DIMENSION, IndexStructureError, canonicalize, free_indices,
)
from .expr import (
    Atom, Expr, Index, Num, Partial, Product, Sum, Symmetry, Var, product,
    split_coefficient,
)

COFACTOR = "%cofactor"


class MatchError(ValueError):
    pass


class InstantiationError(ValueError):
    pass


class StalePositionError(LookupError):
    pass


@dataclass(frozen=True)
class Binding:
    exprs: tuple[tuple[str, Expr], ...] = ()
    indices: tuple[tuple[str, Index], ...] = ()
    sign: int = 1  # instantiate(pattern) == sign * subject

    @classmethod
    def of(cls, exprs: dict[str, Expr] | None = None, indices: dict[str, Index] | None = None) -> Binding:
        return cls(tuple(sorted((exprs or {}).items())), tuple(sorted((indices or {}).items())))

    def expr(self, name: str) -> Expr | None:
        for k, v in self.exprs:
            if k == name:
                return v
        return None

    def index(self, name: str) -> Index | None:
        for k, v in self.indices:
            if k == name:
                return v
        return None

    def with_expr(self, name: str, value: Expr) -> Binding:
        return Binding(tuple(sorted(self.exprs + ((name, value),))), self.indices, self.sign)

    def with_index(self, name: str, value: Index) -> Binding:
        return Binding(self.exprs, tuple(sorted(self.indices + ((name, value),))), self.sign)

    def with_sign(self, sign: int) -> Binding:
        return Binding(self.exprs, self.indices, sign)

    def as_text(self) -> dict[str, str]:
        out = {f"{k}?": str(v) for k, v in self.indices}
        out.update({k if k == COFACTOR else f"{k}?": str(v) for k, v in self.exprs})
        if self.sign != 1:
            out["%sign"] = str(self.sign)
        return out

    def __str__(self) -> str:
        items = [f"{k} -> {v}" for k, v in self.as_text().items()]
        return "{" + ", ".join(items) + "}"


# -- positions --------------------------------------------------------------

Step = Union[int, tuple]
Position = tuple  # sequence of Step; a trailing tuple selects several sum terms


def format_position(pos: Position) -> str:
    if not pos:
        return "root"
    parts = []
    for step in pos:
        parts.append("{" + ",".join(map(str, step)) + "}" if isinstance(step, tuple) else str(step))
    return ".".join(parts)


def parse_position(text: str) -> Position:
    text = text.strip()
    if text in ("", "root"):
        return ()
    out: list[Step] = []
    for part in text.split("."):
        if part.startswith("{"):
            out.append(tuple(int(x) for x in part.strip("{}").split(",")))
        else:
            out.append(int(part))
    return tuple(out)


def _children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, (Sum, Product, Partial)):
        return e.children()
    return ()


def positions(e: Expr) -> Iterator[tuple[Position, Expr]]:
    """Every subexpression with its path, in preorder."""
    stack: list[tuple[Position, Expr]] = [((), e)]
    while stack:
        pos, sub = stack.pop()
        yield pos, sub
        kids = _children(sub)
        for k in range(len(kids) - 1, -1, -1):
            stack.append((pos + (k,), kids[k]))


def subexpr_at(e: Expr, pos: Position) -> Expr:
    cur = e
    for depth, step in enumerate(pos):
        if isinstance(step, tuple):
            if depth != len(pos) - 1 or not isinstance(cur, Sum):
                raise StalePositionError(f"term selection only valid on a sum: {format_position(pos)}")
            try:
                return Sum(tuple(cur.terms[k] for k in step))
            except IndexError:
                raise StalePositionError(f"no such position {format_position(pos)}") from None
        kids = _children(cur)
        if not 0 <= step < len(kids):
            raise StalePositionError(f"no such position {format_position(pos)}")
        cur = kids[step]
    return cur


def replace_at(e: Expr, pos: Position, new: Expr) -> Expr:
    if not pos:
        return new
    step, rest = pos[0], pos[1:]
    if isinstance(step, tuple):
        if rest or not isinstance(e, Sum) or any(k >= len(e.terms) for k in step):
            raise StalePositionError("stale term selection")
        kept = tuple(t for k, t in enumerate(e.terms) if k not in step)
        return Sum(kept + (new,))
    kids = _children(e)
    if not 0 <= step < len(kids):
        raise StalePositionError(f"no such child {step}")
    replaced = replace_at(kids[step], rest, new)
    if isinstance(e, Sum):
        return Sum(e.terms[:step] + (replaced,) + e.terms[step + 1:])
    if isinstance(e, Product):
        return Product(e.coefficient, e.factors[:step] + (replaced,) + e.factors[step + 1:])
    return Partial(e.index, replaced)


# -- matching ---------------------------------------------------------------


def _slot_orders(sym: Symmetry, n: int) -> list[tuple[tuple[int, ...], int]]:
    """Slot orders a head is invariant under, each with its sign."""
    if sym is Symmetry.NONE or n < 2:
        return [(tuple(range(n)), 1)]
    out = []
    for p in itertools.permutations(range(n)):
        if sym is Symmetry.SYMMETRIC:
            out.append((p, 1))
        else:
            inversions = sum(1 for a in range(n) for b in range(a + 1, n) if p[a] > p[b])
            out.append((p, -1 if inversions % 2 else 1))
    return out


class _Matcher:
    def __init__(self, dim: int):
        self.dim = dim

    def same(self, a: Expr, b: Expr) -> bool:
        return a == b or canonicalize(a, self.dim) == canonicalize(b, self.dim)

    def bind_expr(self, name: str, value: Expr, b: Binding) -> Iterator[Binding]:
        bound = b.expr(name)
        if bound is None:
            yield b.with_expr(name, value)
        elif self.same(bound, value):
            yield b

    def index(self, p: Index, s: Index, b: Binding) -> Binding | None:
        if not p.pattern:
            return b if p == s else None
        image = s.flipped() if p.upper else s
        bound = b.index(p.name)
        if bound is None:
            return b.with_index(p.name, image)
        return b if bound == image else None

    def indices(self, ps, ss, b: Binding) -> Binding | None:
        for p, s in zip(ps, ss):
            b = self.index(p, s, b)
            if b is None:
                return None
        return b

    def match(self, p: Expr, s: Expr, b: Binding) -> Iterator[Binding]:
        if (isinstance(p, (Atom, Partial)) and isinstance(s, Product)
                and len(s.factors) == 1 and abs(s.coefficient) == 1):
            # -F[_mu,_nu] is F[_nu,_mu] in canonical dress
            for nb in self.match(p, s.factors[0], b):
                yield nb.with_sign(nb.sign * int(s.coefficient))
            return
        if isinstance(p, Var):
            yield from self.bind_expr(p.name, s, b)
        elif isinstance(p, Num):
            if isinstance(s, Num) and s.value == p.value:
                yield b
            elif p.value == 0 and s.is_zero:
                yield b
        elif isinstance(p, Atom):
            if not isinstance(s, Atom) or s.head.name != p.head.name or len(s.indices) != len(p.indices):
                return
            for order, sign in _slot_orders(s.head.symmetry, len(s.indices)):
                nb = self.indices(p.indices, [s.indices[k] for k in order], b)
                if nb is not None:
                    yield nb.with_sign(nb.sign * sign)
        elif isinstance(p, Partial):
            yield from self.partial(p, s, b)
        elif isinstance(p, Product):
            yield from self.product(p, s, b)
        elif isinstance(p, Sum):
            if p.is_zero:
                if s.is_zero:
                    yield b
                return
            if isinstance(s, Sum) and len(s.terms) == len(p.terms):
                yield from self.sum_terms(p.terms, s.terms, b)

    def partial(self, p: Partial, s: Expr, b: Binding) -> Iterator[Binding]:
        p_chain, p_base = _chain(p)
        if not isinstance(s, Partial):
            return
        s_chain, s_base = _chain(s)
        if len(p_chain) > len(s_chain):
            return
        for picks in itertools.permutations(range(len(s_chain)), len(p_chain)):
            nb = self.indices(p_chain, [s_chain[k] for k in picks], b)
            if nb is None:
                continue
            rest = [s_chain[k] for k in range(len(s_chain)) if k not in picks]
            sub = s_base
            for i in reversed(rest):
                sub = Partial(i, sub)
            yield from self.match(p_base, sub, nb)

    def product(self, p: Product, s: Expr, b: Binding) -> Iterator[Binding]:
        if isinstance(s, Sum):
            return
        s_coeff, s_factors = split_coefficient(s)
        seq = [f for f in p.factors if isinstance(f, Var) and f.sequence]
        singles = [f for f in p.factors if isinstance(f, Var) and not f.sequence]
        structured = [f for f in p.factors if not isinstance(f, Var)]
        if len(seq) > 1:
            raise MatchError("at most one sequence variable per product pattern")
        ordered = structured + singles
        if len(ordered) > len(s_factors):
            return
        ratio = s_coeff / p.coefficient

        def assign(k: int, used: frozenset, b: Binding) -> Iterator[Binding]:
            if k == len(ordered):
                # the coefficient takes up the sign collected from the factors
                rest = [f for n, f in enumerate(s_factors) if n not in used]
                if seq:
                    yield from self.bind_expr(seq[0].name, product(ratio * b.sign, rest), b.with_sign(1))
                elif not rest and ratio == b.sign:
                    yield b.with_sign(1)
                return
            tried = set()
            for n, f in enumerate(s_factors):
                if n in used or f in tried:
                    continue
                tried.add(f)
                for nb in self.match(ordered[k], f, b):
                    yield from assign(k + 1, used | {n}, nb)

        yield from assign(0, frozenset(), b)

    def sum_terms(self, p_terms, s_terms, b: Binding, cofactor: bool = False) -> Iterator[Binding]:
        patterns = [_with_cofactor(t) if cofactor else t for t in p_terms]

        # every term must come out with the same overall sign
        def assign(k: int, used: frozenset, b: Binding, sign: int | None) -> Iterator[Binding]:
            if k == len(patterns):
                yield b.with_sign(b.sign * (sign or 1))
                return
            outer = b.sign
            for n, t in enumerate(s_terms):
                if n in used:
                    continue
                for nb in self.match(patterns[k], t, b.with_sign(1)):
                    if sign is None or nb.sign == sign:
                        yield from assign(k + 1, used | {n}, nb.with_sign(outer), nb.sign)

        yield from assign(0, frozenset(), b, None)


def _chain(e: Expr) -> tuple[list[Index], Expr]:
    chain = []
    while isinstance(e, Partial):
        chain.append(e.index)
        e = e.operand
    return chain, e


def _with_cofactor(term: Expr) -> Expr:
    c, factors = split_coefficient(term)
    if any(isinstance(f, Var) and f.sequence for f in factors):
        return term
    return Product(c, factors + (Var(COFACTOR, True),))


def _dedupe(bindings) -> list[Binding]:
    out, seen = [], set()
    for b in bindings:
        if b not in seen:
            seen.add(b)
            out.append(b)
    return out


_HIDDEN = "%"


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


@lru_cache(maxsize=4096)
def _bound_dummies(pattern: Expr) -> Expr:
    """Literal index names contracted inside a pattern are bound: they stand
    for whatever dummy the subject uses, so they become hidden variables."""
    try:
        free = {i.name for i in free_indices(pattern)}
    except IndexStructureError:
        return pattern
    names = {i.name for i in pattern.all_indices() if not i.pattern and not i.concrete} - free
    if not names:
        return pattern
    return _map_indices(
        pattern, lambda i: Index(_HIDDEN + i.name, i.upper, True) if not i.pattern and i.name in names else i,
    )


def _visible(bindings) -> list[Binding]:
    out = []
    for b in bindings:
        if any(k.startswith(_HIDDEN) for k, _ in b.indices):
            b = Binding(b.exprs, tuple((k, v) for k, v in b.indices if not k.startswith(_HIDDEN)), b.sign)
        out.append(b)
    return _dedupe(out)


def match_pattern(pattern: Expr, subject: Expr, dim: int = DEFAULT_DIMENSION) -> list[Binding]:
    """All bindings under which ``pattern`` instantiates to ``subject``.

    ``subject`` must be ground and canonical. Products match modulo
    commutativity, symmetric and antisymmetric heads modulo slot orders,
    commuting partial chains modulo order. An empty list means no match.
    """
    return [b for b in match_signed(pattern, subject, dim) if b.sign == 1]


def match_signed(pattern: Expr, subject: Expr, dim: int = DEFAULT_DIMENSION) -> list[Binding]:
    """Like :func:`match_pattern` but also returns matches up to an overall
    sign, recorded in ``Binding.sign``."""
    return _visible(_Matcher(dim).match(_bound_dummies(pattern), subject, Binding()))


def match_sum_terms(pattern: Sum, terms, dim: int = DEFAULT_DIMENSION) -> list[Binding]:
    """Match a sum pattern against a selection of sum terms, allowing one
    common cofactor that multiplies every matched term."""
    pattern = _bound_dummies(pattern)
    return _visible(_Matcher(dim).sum_terms(pattern.terms, tuple(terms), Binding(), cofactor=True))


def with_cofactor(template: Expr) -> Expr:
    """The template that pairs with a cofactor match."""
    return Product(Fraction(1), (Var(COFACTOR, True), template))


def pattern_with_cofactor(pattern: Sum) -> Sum:
    return Sum(tuple(_with_cofactor(t) for t in pattern.terms))


# -- instantiation ----------------------------------------------------------


def _literal_names(e: Expr) -> set[str]:
    return {i.name for i in e.all_indices() if not i.pattern and not i.concrete}


def _value_names(b: Binding) -> set[str]:
    names = {i.name for _, i in b.indices}
    for _, v in b.exprs:
        names |= {i.name for i in v.all_indices()}
    return names


def substitute(template: Expr, b: Binding, fresh: dict[str, str] | None = None) -> Expr:
    """Plain substitution, no canonicalization."""
    fresh = fresh or {}

    def idx(i: Index) -> Index:
        if i.pattern:
            image = b.index(i.name)
            if image is None:
                raise InstantiationError(f"unbound index variable {i.name}?")
            return image.flipped() if i.upper else image
        if i.name in fresh:
            return Index(fresh[i.name], i.upper)
        return i

    def walk(e: Expr) -> Expr:
        if isinstance(e, Var):
            value = b.expr(e.name)
            if value is None:
                raise InstantiationError(f"unbound variable {e.name}")
            return value
        if isinstance(e, Atom):
            return Atom(e.head, tuple(idx(i) for i in e.indices))
        if isinstance(e, Partial):
            return Partial(idx(e.index), walk(e.operand))
        if isinstance(e, Product):
            return Product(e.coefficient, tuple(walk(f) for f in e.factors))
        if isinstance(e, Sum):
            return Sum(tuple(walk(t) for t in e.terms))
        return e

    return walk(template)


def instantiate(template: Expr, b: Binding, dim: int = DEFAULT_DIMENSION) -> Expr:
    """Substitute ``b`` into ``template`` and canonicalize.

    Index names contracted inside the template are renamed away from every
    index name occurring in the bound values first; literal free indices
    keep their names.
    """
    taken = _value_names(b)
    try:
        outside = {i.name for i in free_indices(template) if not i.pattern}
    except IndexStructureError:
        outside = set()
    clashes = sorted((_literal_names(template) - outside) & taken)
    fresh: dict[str, str] = {}
    used = taken | _literal_names(template)
    for name in clashes:
        k = 1
        while f"{name}{k}" in used:
            k += 1
        fresh[name] = f"{name}{k}"
        used.add(fresh[name])
    raw = substitute(template, b, fresh)
    try:
        free_indices(raw)
    except IndexStructureError as err:
        raise InstantiationError(f"instantiated template is ill-formed: {err}") from None
    return canonicalize(raw, dim)


__all__ = [
    "Binding", "Position", "MatchError", "InstantiationError", "StalePositionError",
    "COFACTOR", "match_pattern", "match_signed", "match_sum_terms", "instantiate", "substitute",
    "positions", "subexpr_at", "replace_at", "format_position", "parse_position",
    "with_cofactor", "pattern_with_cofactor",
]
