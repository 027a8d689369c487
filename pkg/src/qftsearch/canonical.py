"""Free-index analysis and canonical form.

The canonical form of an expression is a fully expanded sum of monomials
``c * f1 * f2 * ...`` where every factor is a tensor atom or a partial
derivative of a coefficient-free monomial. Products of derivatives are left
alone (the product rule is a derivation rule, not a normalization).

Uniqueness under renaming of dummy indices is obtained by brute force: every
assignment of canonical labels to the dummies of a monomial is tried and the
lexicographically smallest sort key wins. Dummy variance is dropped from the
key (raising one slot of a contracted pair and lowering the other is an
identity with the metric) and reassigned afterwards, lower on first
occurrence. If two labelings give the same key with opposite signs the
monomial vanishes.
"""

from __future__ import annotations

import itertools
from collections import Counter
from fractions import Fraction
from functools import lru_cache

from .expr import (
    DELTA, ETA, METRIC_NAMES, ZERO, Atom, Expr, Index, Num, Partial, Product, Sum,
    Symmetry, Var, product,
)

DEFAULT_DIMENSION = 4


class IndexStructureError(ValueError):
    """Malformed index structure (bad dummy pairing or inconsistent sum)."""


# -- free indices -----------------------------------------------------------


def _occurrences(e: Expr) -> list[Index] | None:
    """Free index occurrences of ``e``; None marks a zero summand."""
    if isinstance(e, Num):
        return None if e.value == 0 else []
    if isinstance(e, Var):
        return []
    if isinstance(e, Atom):
        return _pair_up(list(e.indices))
    if isinstance(e, Partial):
        inner = _occurrences(e.operand)
        if inner is None:
            return None
        return _pair_up([e.index, *inner])
    if isinstance(e, Product):
        occ: list[Index] = []
        for f in e.factors:
            sub = _occurrences(f)
            if sub is None:
                return None
            occ.extend(sub)
        return _pair_up(occ)
    if isinstance(e, Sum):
        common: frozenset[Index] | None = None
        result: list[Index] | None = None
        for term in e.terms:
            sub = _occurrences(term)
            if sub is None:
                continue
            if common is None:
                common, result = frozenset(sub), sub
            elif frozenset(sub) != common:
                raise IndexStructureError(
                    f"inconsistent free indices across sum terms: "
                    f"{_fmt(common)} vs {_fmt(frozenset(sub))}"
                )
        return result
    raise TypeError(f"not an expression: {e!r}")


def _fmt(indices) -> str:
    return "{" + ", ".join(sorted(str(i) for i in indices)) + "}"


def _pair_up(occ: list[Index]) -> list[Index]:
    counts = Counter(i.name for i in occ if not i.concrete)
    free = []
    for name, n in counts.items():
        if n > 2:
            raise IndexStructureError(f"index {name} appears {n} times in a product")
        if n == 2:
            a, b = [i for i in occ if i.name == name]
            if a.upper == b.upper:
                raise IndexStructureError(
                    f"repeated index {name} must appear once upper and once lower"
                )
    for i in occ:
        if not i.concrete and counts[i.name] == 1:
            free.append(i)
    return free


def free_indices(e: Expr) -> frozenset[Index]:
    """Free (non-contracted) indices of ``e`` with their variance.

    Concrete component indices (``_0``) are neither free nor dummy.
    """
    occ = _occurrences(e)
    return frozenset(occ or ())


# -- canonicalization -------------------------------------------------------

Mono = tuple  # (Fraction, tuple of factors)


class _Fresh:
    def __init__(self):
        self.n = 0

    def __call__(self) -> str:
        self.n += 1
        return f"%{self.n}"


def _name_counts(factors) -> Counter:
    counts: Counter = Counter()
    for f in factors:
        for i in f.all_indices():
            if not i.concrete:
                counts[i.name] += 1
    return counts


def _rename(e: Expr, mapping: dict[str, Index | str]) -> Expr:
    """Rename index occurrences by name. A str target keeps variance; an
    Index target replaces the occurrence outright."""

    def fix(i: Index) -> Index:
        target = mapping.get(i.name)
        if target is None:
            return i
        if isinstance(target, str):
            return Index(target, i.upper, i.pattern)
        return target

    if isinstance(e, Atom):
        if not any(i.name in mapping for i in e.indices):
            return e
        return Atom(e.head, tuple(fix(i) for i in e.indices))
    if isinstance(e, Partial):
        return Partial(fix(e.index), _rename(e.operand, mapping))
    if isinstance(e, Product):
        return Product(e.coefficient, tuple(_rename(f, mapping) for f in e.factors))
    if isinstance(e, Sum):
        return Sum(tuple(_rename(t, mapping) for t in e.terms))
    return e


def rename_indices(e: Expr, mapping: dict[str, str]) -> Expr:
    """Rename index names (variance kept) throughout ``e``."""
    return _rename(e, dict(mapping))


def _freshen(factors: tuple, fresh: _Fresh) -> tuple:
    """Rename dummies internal to ``factors`` to fresh names."""
    counts = _name_counts(factors)
    internal = [n for n, c in counts.items() if c == 2]
    if not internal:
        return factors
    mapping = {n: fresh() for n in internal}
    return tuple(_rename(f, mapping) for f in factors)


def _metric_value(atom: Atom) -> Fraction:
    i, j = atom.indices
    if i.name != j.name:
        return Fraction(0)
    if i.upper != j.upper:
        return Fraction(1)
    return Fraction(1) if i.name == "0" else Fraction(-1)


def _terms(e: Expr, fresh: _Fresh) -> list[Mono]:
    if isinstance(e, Num):
        return [] if e.value == 0 else [(e.value, ())]
    if isinstance(e, Atom):
        if e.head.name in METRIC_NAMES and all(i.concrete for i in e.indices):
            value = _metric_value(e)
            return [(value, ())] if value else []
        return [(Fraction(1), (e,))]
    if isinstance(e, Var):
        return [(Fraction(1), (e,))]
    if isinstance(e, Sum):
        out: list[Mono] = []
        for t in e.terms:
            out.extend(_terms(t, fresh))
        return out
    if isinstance(e, Product):
        acc: list[Mono] = [(e.coefficient, ())]
        for f in e.factors:
            pieces = _terms(f, fresh)
            acc = [
                (c1 * c2, fs1 + _freshen(fs2, fresh))
                for c1, fs1 in acc
                for c2, fs2 in pieces
            ]
            if not acc:
                return []
        return acc
    if isinstance(e, Partial):
        out = []
        for c, fs in _terms(e.operand, fresh):
            fs = _freshen(fs, fresh)
            constants = tuple(f for f in fs if isinstance(f, Atom) and f.head.constant)
            rest = tuple(f for f in fs if not (isinstance(f, Atom) and f.head.constant))
            if not rest:
                continue
            operand = rest[0] if len(rest) == 1 else Product(Fraction(1), rest)
            out.append((c, constants + (Partial(e.index, operand),)))
        return out
    raise TypeError(f"not an expression: {e!r}")


def _contract(coefficient: Fraction, factors: tuple, dim: int) -> tuple[Fraction, tuple]:
    """Eliminate eta/delta factors contracted with anything in the monomial."""
    factors = list(factors)
    changed = True
    while changed:
        changed = False
        counts = _name_counts(factors)
        for k, f in enumerate(factors):
            if not (isinstance(f, Atom) and f.head.name in METRIC_NAMES):
                continue
            i, j = f.indices
            if i.concrete or j.concrete or i.pattern or j.pattern:
                continue
            if i.name == j.name:
                coefficient *= dim
                del factors[k]
                changed = True
                break
            for this, other in ((i, j), (j, i)):
                if counts[this.name] == 2:
                    rest = factors[:k] + factors[k + 1:]
                    # the partner occurrence takes the metric's other slot
                    factors = [_rename(g, {this.name: other}) for g in rest]
                    changed = True
                    break
            if changed:
                break
    out = []
    for f in factors:
        if isinstance(f, Atom) and f.head.name in METRIC_NAMES:
            i, j = f.indices
            head = DELTA if i.upper != j.upper else ETA
            if head is not f.head:
                f = Atom(head, f.indices)
        out.append(f)
    return coefficient, tuple(out)


# Sort keys. Tags order variants: Num < Atom < Partial < Product < Sum < Var.


class _Zero(Exception):
    pass


def _index_key(i: Index, labels: dict[str, int]):
    label = labels.get(i.name)
    if label is not None:
        return (0, label)
    if i.concrete:
        return (2, int(i.name), i.upper)
    if i.pattern:
        return (3, i.name, i.upper)
    return (1, i.name, i.upper)


def _sort_with_sign(keys: list) -> tuple[list[int], int]:
    order = sorted(range(len(keys)), key=lambda n: keys[n])
    # parity of the permutation by cycle decomposition
    seen = [False] * len(order)
    sign = 1
    for start in range(len(order)):
        if seen[start]:
            continue
        length = 0
        j = start
        while not seen[j]:
            seen[j] = True
            j = order[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return order, sign


def _norm(e: Expr, labels: dict[str, int]):
    """Normalize ``e`` under a dummy labeling: returns (sign, key, shape).

    ``shape`` is a nested structure from which the expression is rebuilt.
    Raises _Zero for an antisymmetric slot collision.
    """
    if isinstance(e, Atom):
        keys = [_index_key(i, labels) for i in e.indices]
        sym = e.head.symmetry
        if sym is Symmetry.NONE or len(keys) < 2:
            return 1, (1, e.head.name, tuple(keys)), (e, tuple(e.indices))
        order, sign = _sort_with_sign(keys)
        sorted_keys = [keys[n] for n in order]
        if sym is Symmetry.ANTISYMMETRIC:
            if any(a == b for a, b in zip(sorted_keys, sorted_keys[1:])):
                raise _Zero
        else:
            sign = 1
        indices = tuple(e.indices[n] for n in order)
        return sign, (1, e.head.name, tuple(sorted_keys)), (e, indices)
    if isinstance(e, Partial):
        chain = []
        base = e
        while isinstance(base, Partial):
            chain.append(base.index)
            base = base.operand
        chain.sort(key=lambda i: _index_key(i, labels))
        sign, base_key, base_shape = _norm(base, labels)
        key = (2, tuple(_index_key(i, labels) for i in chain), base_key)
        return sign, key, ("partial", tuple(chain), base_shape)
    if isinstance(e, Product):
        sign = 1
        items = []
        for f in e.factors:
            s, k, shape = _norm(f, labels)
            sign *= s
            items.append((k, shape))
        items.sort(key=lambda item: item[0])
        key = (3, tuple(k for k, _ in items))
        return sign, key, ("product", tuple(shape for _, shape in items))
    if isinstance(e, Var):
        return 1, (5, e.name, e.sequence), (e,)
    raise TypeError(f"unexpected factor {e!r}")


def _build(shape, assign) -> Expr:
    tag = shape[0]
    if tag == "partial":
        _, chain, base_shape = shape
        chain = [assign(i) for i in chain]
        out = _build(base_shape, assign)
        for i in reversed(chain):
            out = Partial(i, out)
        return out
    if tag == "product":
        return Product(Fraction(1), tuple(_build(s, assign) for s in shape[1]))
    if isinstance(tag, Atom):
        atom, indices = shape
        return Atom(atom.head, tuple(assign(i) for i in indices))
    return tag  # Var


def _dummy_names(n: int, taken: set[str]) -> list[str]:
    names = []
    k = 0
    while len(names) < n:
        name = f"d{k}"
        if name not in taken:
            names.append(name)
        k += 1
    return names


def _normalize_mono(coefficient: Fraction, factors: tuple):
    """Return (key, coefficient, factors) in canonical labeling, or None if zero."""
    counts = _name_counts(factors)
    dummies = sorted(n for n, c in counts.items() if c == 2)
    free_names = {n for n, c in counts.items() if c == 1}
    best = None
    seen: dict = {}
    for perm in itertools.permutations(range(len(dummies))):
        labels = dict(zip(dummies, perm))
        sign = 1
        items = []
        try:
            for f in factors:
                s, k, shape = _norm(f, labels)
                sign *= s
                items.append((k, shape))
        except _Zero:
            return None
        items.sort(key=lambda item: item[0])
        key = tuple(k for k, _ in items)
        prior = seen.get(key)
        if prior is not None:
            if prior != sign:
                return None
            continue
        seen[key] = sign
        if best is None or key < best[0]:
            best = (key, sign, items, labels)
    key, sign, items, labels = best
    names = _dummy_names(len(dummies), free_names)
    used: set[str] = set()

    def assign(i: Index) -> Index:
        label = labels.get(i.name)
        if label is None:
            return i
        name = names[label]
        upper = name in used
        used.add(name)
        return Index(name, upper, i.pattern)

    built = tuple(_build(shape, assign) for _, shape in items)
    return key, coefficient * sign, built


def _collect(monos, dim: int) -> Expr:
    collected: dict = {}
    for c, fs in monos:
        if c == 0:
            continue
        c, fs = _contract(c, fs, dim)
        normalized = _normalize_mono(c, fs)
        if normalized is None:
            continue
        key, c, fs = normalized
        if key in collected:
            prev_c, prev_fs = collected[key]
            collected[key] = (prev_c + c, prev_fs)
        else:
            collected[key] = (c, fs)
    terms = [product(c, fs) for key, (c, fs) in sorted(collected.items()) if c != 0]
    if not terms:
        return ZERO
    if len(terms) == 1:
        return terms[0]
    return Sum(tuple(terms))


@lru_cache(maxsize=65536)
def _canonicalize(e: Expr, dim: int) -> Expr:
    return _collect(_terms(e, _Fresh()), dim)


def canonicalize(e: Expr, dim: int = DEFAULT_DIMENSION) -> Expr:
    """Return the canonical representative of ``e``. Idempotent."""
    return _canonicalize(e, dim)


def terms_of(e: Expr) -> tuple[Expr, ...]:
    """Summands of a canonical expression."""
    if isinstance(e, Sum):
        return e.terms
    return (e,)


def equivalent(a: Expr, b: Expr, dim: int = DEFAULT_DIMENSION) -> bool:
    return canonicalize(a, dim) == canonicalize(b, dim)


__all__ = [
    "DEFAULT_DIMENSION", "IndexStructureError", "free_indices", "canonicalize",
    "rename_indices", "terms_of", "equivalent",
]
