"""Shared test machinery: random expressions, brute-force oracles."""

from __future__ import annotations

import itertools
import random
from fractions import Fraction

from qftsearch.canonical import IndexStructureError, canonicalize, free_indices
from qftsearch.expr import (
    DELTA, ETA, FIELD_STRENGTH, GAUGE_FIELD, Atom, Expr, Index, Num, Partial, Product, Sum,
    Symmetry, Var, product,
)
from qftsearch.matching import substitute, Binding
from qftsearch.rules import successors

NAMES = ("mu", "nu", "lam", "sig", "rho", "kap")


# -- random well-formed expressions ------------------------------------------


def _slots(shape: str) -> int:
    return {"A": 1, "F": 2, "eta": 2, "delta": 2, "dA": 2, "ddA": 3, "dF": 3, "dAA": 3}[shape]


def _build(shape: str, idx: list[Index]) -> Expr:
    if shape == "A":
        return Atom(GAUGE_FIELD, (idx[0],))
    if shape == "F":
        return Atom(FIELD_STRENGTH, tuple(idx))
    if shape == "eta":
        return Atom(ETA, tuple(idx))
    if shape == "delta":
        return Atom(DELTA, tuple(idx))
    if shape == "dA":
        return Partial(idx[0], Atom(GAUGE_FIELD, (idx[1],)))
    if shape == "ddA":
        return Partial(idx[0], Partial(idx[1], Atom(GAUGE_FIELD, (idx[2],))))
    if shape == "dF":
        return Partial(idx[0], Atom(FIELD_STRENGTH, (idx[1], idx[2])))
    if shape == "dAA":
        return Partial(idx[0], Product(Fraction(1), (Atom(GAUGE_FIELD, (idx[1],)), Atom(GAUGE_FIELD, (idx[2],)))))
    raise ValueError(shape)


def random_monomial(rng: random.Random, free: list[Index], shapes, max_factors: int = 3) -> Expr | None:
    """One product term whose free indices are exactly ``free``."""
    for _ in range(50):
        k = rng.randint(1, max_factors)
        picked = [rng.choice(shapes) for _ in range(k)]
        n = sum(_slots(s) for s in picked)
        if n < len(free) or (n - len(free)) % 2:
            continue
        pairs = (n - len(free)) // 2
        dummies = [n_ for n_ in NAMES if n_ not in {i.name for i in free}][:pairs]
        if len(dummies) < pairs:
            continue
        occ: list[Index] = list(free)
        for name in dummies:
            up = rng.random() < 0.5
            occ += [Index(name, up), Index(name, not up)]
        rng.shuffle(occ)
        factors, pos = [], 0
        for s in picked:
            factors.append(_build(s, occ[pos:pos + _slots(s)]))
            pos += _slots(s)
        coefficient = Fraction(rng.choice([1, 1, 1, -1, 2, -2, 3]), rng.choice([1, 1, 2, 4]))
        return product(coefficient, factors)
    return None


def random_expr(
    rng: random.Random,
    n_free: int | None = None,
    max_nodes: int = 12,
    shapes=("A", "F", "eta", "delta", "dA", "ddA", "dF", "dAA"),
    max_terms: int = 3,
) -> Expr:
    """A random well-formed expression of at most ``max_nodes`` nodes."""
    while True:
        k = rng.choice([0, 0, 1, 2]) if n_free is None else n_free
        free = [Index(NAMES[j], rng.random() < 0.5) for j in range(k)]
        terms = []
        for _ in range(rng.randint(1, max_terms)):
            t = random_monomial(rng, free, shapes)
            if t is not None:
                terms.append(t)
        if not terms:
            continue
        e = terms[0] if len(terms) == 1 else Sum(tuple(terms))
        if e.node_count() > max_nodes:
            continue
        try:
            free_indices(e)
        except IndexStructureError:
            continue
        return e


def dummy_names(e: Expr) -> set[str]:
    """Names that occur twice somewhere, i.e. contracted somewhere."""
    from collections import Counter

    out = set()
    terms = e.terms if isinstance(e, Sum) else (e,)
    for t in terms:
        counts = Counter(i.name for i in t.all_indices())
        out |= {n for n, c in counts.items() if c == 2}
    return out


def rename(e: Expr, fn) -> Expr:
    """Apply ``fn`` to every index occurrence."""
    if isinstance(e, Atom):
        return Atom(e.head, tuple(fn(i) for i in e.indices))
    if isinstance(e, Partial):
        return Partial(fn(e.index), rename(e.operand, fn))
    if isinstance(e, Product):
        return Product(e.coefficient, tuple(rename(f, fn) for f in e.factors))
    if isinstance(e, Sum):
        return Sum(tuple(rename(t, fn) for t in e.terms))
    return e


# -- brute-force matcher -------------------------------------------------------


def _pattern_vars(p: Expr):
    exprs, seqs, idx = set(), set(), set()
    factor_vars = set()
    for n in p.walk():
        if isinstance(n, Var):
            (seqs if n.sequence else exprs).add(n.name)
        if isinstance(n, Product):
            factor_vars |= {f.name for f in n.factors if isinstance(f, Var) and not f.sequence}
    for i in p.all_indices():
        if i.pattern:
            idx.add(i.name)
    return sorted(exprs), sorted(seqs), sorted(idx), factor_vars


def _subterms(s: Expr) -> list[Expr]:
    out = []
    for n in s.walk():
        out.append(n)
        if isinstance(n, Partial):
            chain, base = [], n
            while isinstance(base, Partial):
                chain.append(base.index)
                base = base.operand
            for r in range(len(chain)):
                for keep in itertools.permutations(chain, r):
                    e = base
                    for i in reversed(keep):
                        e = Partial(i, e)
                    out.append(e)
    seen, uniq = set(), []
    for e in out:
        if e not in seen:
            seen.add(e)
            uniq.append(e)
    return uniq


def _seq_candidates(s: Expr, p: Expr) -> list[Expr]:
    out = []
    s_coeffs = {n.coefficient for n in s.walk() if isinstance(n, Product)} | {Fraction(1)}
    p_coeffs = {n.coefficient for n in p.walk() if isinstance(n, Product)} | {Fraction(1)}
    coeffs = {sign * a / b for a in s_coeffs for b in p_coeffs for sign in (1, -1)}
    groups = [n.factors for n in s.walk() if isinstance(n, Product)]
    if not isinstance(s, (Product, Sum)):
        groups.append((s,))
    for fs in groups:
        for r in range(len(fs) + 1):
            for sub in itertools.combinations(fs, r):
                out.extend(product(c, sub) for c in coeffs)
    return out


def weak_form(e: Expr):
    """Structural normal form modulo commutativity, head slot symmetries and
    commuting partials only: no dummy relabelling, no raising or lowering.
    Returns ``(coefficient, key)``."""
    if isinstance(e, Num):
        return (e.value, ("one",))
    if isinstance(e, Atom):
        keys = [(i.name, i.upper) for i in e.indices]
        sign = 1
        if e.head.symmetry is Symmetry.SYMMETRIC:
            keys.sort()
        elif e.head.symmetry is Symmetry.ANTISYMMETRIC:
            for a in range(len(keys)):
                for b in range(len(keys) - 1 - a):
                    if keys[b] > keys[b + 1]:
                        keys[b], keys[b + 1] = keys[b + 1], keys[b]
                        sign = -sign
        return (Fraction(sign), ("atom", e.head.name, tuple(keys)))
    if isinstance(e, Partial):
        chain, base = [], e
        while isinstance(base, Partial):
            chain.append((base.index.name, base.index.upper))
            base = base.operand
        c, key = weak_form(base)
        return (c, ("d", tuple(sorted(chain)), key))
    if isinstance(e, Product):
        c, keys = e.coefficient, []
        stack = list(e.factors)
        while stack:
            f = stack.pop()
            if isinstance(f, Product):
                c *= f.coefficient
                stack.extend(f.factors)
                continue
            fc, fk = weak_form(f)
            if fk == ("one",):
                c *= fc
                continue
            c *= fc
            keys.append(fk)
        if not keys:
            return (c, ("one",))
        if len(keys) == 1:
            return (c, keys[0])
        return (c, ("prod", tuple(sorted(keys))))
    if isinstance(e, Sum):
        return (Fraction(1), ("sum", tuple(sorted(weak_form(t) for t in e.terms))))
    raise TypeError(e)


def _bind_literal_dummies(pattern: Expr) -> tuple[Expr, set[str]]:
    free = {i.name for i in free_indices(pattern)}
    names = {i.name for i in pattern.all_indices() if not i.pattern and not i.concrete} - free
    hidden = {n: "@" + n for n in names}
    return rename(pattern, lambda i: Index(hidden[i.name], i.upper, True) if not i.pattern and i.name in hidden else i), set(hidden.values())


def _brute_force(pattern: Expr, subject: Expr, signed: bool):
    """Every assignment of pattern variables to pieces of ``subject`` under
    which the instantiated pattern is ``subject`` up to factor order, head
    slot symmetries and derivative order.

    Expression variables range over the subject's subexpressions (a variable
    standing for one factor of a product takes non-numeric, non-product
    values only), sequence variables over sub-multisets of product factors
    times any coefficient ratio, index variables over every subject index
    name in both variances. Dummy names written literally in the pattern are
    bound names and range like index variables. With ``signed`` a match up to
    an overall sign also counts. Yields ``(binding, sign, hidden names)``.
    """
    pattern, hidden = _bind_literal_dummies(pattern)
    exprs, seqs, idx, factor_vars = _pattern_vars(pattern)
    subs = _subterms(subject)
    names = sorted({i.name for i in subject.all_indices()})
    index_cands = [Index(n, up) for n in names for up in (False, True)]
    expr_cands = {
        v: [e for e in subs if not (v in factor_vars and isinstance(e, (Product, Num, Sum)))]
        for v in exprs
    }
    seq_cands = _seq_candidates(subject, pattern) if seqs else []
    target = weak_form(subject)
    spaces = [expr_cands[v] for v in exprs] + [seq_cands for _ in seqs] + [index_cands for _ in idx]
    for values in itertools.product(*spaces):
        ev = dict(zip(exprs + seqs, values[:len(exprs) + len(seqs)]))
        iv = dict(zip(idx, values[len(exprs) + len(seqs):]))
        b = Binding.of(ev, iv)
        c, key = weak_form(substitute(pattern, b))
        if key != target[1]:
            continue
        if c == target[0]:
            yield b, 1, hidden
        elif signed and c == -target[0]:
            yield b, -1, hidden


def brute_force_bindings(pattern: Expr, subject: Expr) -> set:
    """Normalized bindings from :func:`_brute_force` (sign +1 only)."""
    return {normal_binding(b, pattern, hidden) for b, _, hidden in _brute_force(pattern, subject, False)}


def contracted_vars(pattern: Expr) -> set[str]:
    """Index variables that only ever form dummy pairs inside the pattern."""
    free = {i.name for i in free_indices(pattern) if i.pattern}
    return {i.name for i in pattern.all_indices() if i.pattern} - free


def normal_binding(b: Binding, pattern: Expr, drop: set[str] = frozenset()):
    """Bindings compared up to renaming of pattern-internal dummies: the
    value of a variable that is contracted inside the pattern is immaterial."""
    bound = contracted_vars(pattern) | set(drop)
    return (
        tuple(sorted((k, canonicalize(v)) for k, v in b.exprs)),
        tuple(sorted((k, v) for k, v in b.indices if k not in bound)),
    )


# -- exhaustive path enumeration ----------------------------------------------


def shortest_distances(start: Expr, rs, max_depth: int = 50) -> dict:
    """Minimal derivation length to every reachable state, by enumerating
    all simple paths depth-first."""
    best: dict = {}

    def walk(e, depth, on_path):
        if depth > max_depth:
            return
        if e in best and best[e] <= depth:
            return
        best[e] = depth
        for n, _ in successors(e, rs):
            if n not in on_path:
                walk(n, depth + 1, on_path | {n})

    s = canonicalize(start)
    walk(s, 0, frozenset({s}))
    return best


# -- pattern corpus -------------------------------------------------------------


def abstract(rng: random.Random, e: Expr) -> Expr:
    """Turn a ground expression into a pattern by replacing some index names
    and some subexpressions with variables."""
    names = sorted({i.name for i in e.all_indices()})
    chosen = {n for n in names if rng.random() < 0.7}
    var_names = iter("xyzw")

    def idx(i: Index) -> Index:
        return Index(i.name + "v", i.upper, True) if i.name in chosen else i

    def walk(x: Expr, top: bool) -> Expr:
        if not top and not isinstance(x, Product) and rng.random() < 0.25:
            try:
                return Var(next(var_names))
            except StopIteration:
                pass
        if isinstance(x, Atom):
            return Atom(x.head, tuple(idx(i) for i in x.indices))
        if isinstance(x, Partial):
            return Partial(idx(x.index), walk(x.operand, False))
        if isinstance(x, Product):
            fs = tuple(walk(f, False) for f in x.factors)
            if rng.random() < 0.2:
                fs = fs + (Var("rest", True),)
            return Product(x.coefficient, fs)
        if isinstance(x, Sum):
            return Sum(tuple(walk(t, False) for t in x.terms))
        return x

    return walk(e, True)


def matcher_corpus(seed: int, n: int, max_nodes: int = 6) -> list[tuple[Expr, Expr]]:
    """Pattern/subject pairs of at most ``max_nodes`` nodes each: half the
    patterns are abstracted from their own subject, half from another."""
    rng = random.Random(seed)
    pairs = []
    shapes = ("A", "F", "eta", "dA", "dF", "ddA")
    while len(pairs) < n:
        s = canonicalize(random_expr(rng, max_nodes=max_nodes, shapes=shapes, max_terms=2))
        if s.node_count() > max_nodes or not isinstance(s, (Atom, Partial, Product, Sum)):
            continue
        source = s if rng.random() < 0.5 else canonicalize(
            random_expr(rng, max_nodes=max_nodes, shapes=shapes, max_terms=2))
        p = abstract(rng, source)
        if isinstance(p, Var) or p.node_count() > max_nodes:
            continue
        try:
            free_indices(p)
        except IndexStructureError:
            continue
        pairs.append((p, s))
    return pairs


def brute_force_successors(e: Expr, rs) -> set:
    """Distinct one-step rewrites of a sum-free ``e`` under rules whose left
    sides are not sums, found by trying every rule at every subexpression
    with brute-force bindings."""
    from qftsearch.matching import instantiate, positions, replace_at

    out = set()
    for rule in rs:
        for pos, sub in positions(e):
            for b, sign, _ in _brute_force(rule.lhs, sub, True):
                rhs = instantiate(rule.rhs, b)
                new = canonicalize(replace_at(e, pos, product(sign, (rhs,))))
                if new != e:
                    out.add(new)
    return out


# -- energy-momentum oracle ------------------------------------------------------


def _sig(k: int) -> int:
    return 1 if k == 0 else -1


def lagrangian_poly(theory, dim: int = 4):
    """The lagrangian as one polynomial in component symbols."""
    return theory.components(theory.lagrangian, dim).entry()


def conjugate_momentum(theory, field, mu: int, slots: tuple, dim: int = 4):
    """dL/d(d_mu field_slots) by formal differentiation of the components."""
    return lagrangian_poly(theory, dim).diff((field.name, (mu,), slots))


def tem_oracle(theory, dim: int = 4) -> dict:
    """T^{mu nu} = dL/d(d_mu f_s) d^nu f_s - eta^{mu nu} L for every (mu, nu),
    built from component polynomials only."""
    from qftsearch.components import Poly

    L = lagrangian_poly(theory, dim)
    table = {}
    for mu in range(dim):
        for nu in range(dim):
            total = Poly()
            for f in theory.fields:
                for slots in itertools.product(range(dim), repeat=f.arity):
                    p = L.diff((f.name, (mu,), slots))
                    if p:
                        total = total + p * Poly.symbol((f.name, (nu,), slots), _sig(nu))
            if mu == nu:
                total = total - L.scale(_sig(mu))
            table[(mu, nu)] = total
    return table


def tensor_table(theory, e: Expr, dim: int = 4) -> dict:
    """Components of a rank-2 tensor carrying ^mu, ^nu, keyed (mu, nu)."""
    order = (Index("mu", True), Index("nu", True))
    t = theory.components(e, dim, order=order) if not e.is_zero else None
    return {
        (mu, nu): (t.entry(mu=mu, nu=nu) if t is not None else theory.components(e, dim).entry())
        for mu in range(dim) for nu in range(dim)
    }


# -- toy rule systems ---------------------------------------------------------------

_TOY = "r1: a -> b\nr2: b -> a\nr3: b -> c"

# name -> (rules, start, goal text); every reachable space has at most 50 states
TOY_SYSTEMS = {
    "toy-abc": (_TOY, "a", "equals c"),
    "toy-abc-unreachable": (_TOY, "a", "equals d"),
    "two-cycle": ("fwd: x -> y\nback: y -> x", "x", "equals z"),
    "chain-with-shortcut": ("s1: a -> b\ns2: b -> c\ns3: c -> d\ns4: d -> e\njump: a -> d", "a", "equals e"),
    "independent-factors": ("ac: a -> c\nbd: b -> d\nca: c -> a", "a*b", "equals c*d"),
    "three-cycle-multisets": ("ab: a -> b\nbc: b -> c\nca: c -> a", "a*a*a", "equals d"),
    "three-cycle-pattern": ("ab: a -> b\nbc: b -> c\nca: c -> a", "a*a*b", "matches c*c*x?"),
    "sum-collapse": ("ab: a -> b\nba: b -> a", "a - b", "is-zero"),
}
