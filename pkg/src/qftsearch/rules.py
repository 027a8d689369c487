"""Derivation rules, rule files and one-step successor enumeration."""

from __future__ import annotations

import itertools
import re
from fractions import Fraction
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Iterator

from .canonical import DEFAULT_DIMENSION, IndexStructureError, canonicalize, free_indices
from .expr import Expr, HeadRegistry, Product, Sum, Var, to_text
from .matching import (
    Binding, Position, StalePositionError, format_position, instantiate,
    match_signed, match_sum_terms, positions, replace_at,
    subexpr_at, with_cofactor,
)
from .parser import ParseError, parse_pattern


class RuleError(ValueError):
    """A rule failed to parse or validate."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source or line:
            where = f"{source or '<rules>'}:{line}: " if line else f"{source}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class Rule:
    """A directed rewrite ``lhs -> rhs``.

    A sum-shaped lhs matches any selection of that many terms of a sum, all
    sharing one common cofactor (``a*x - a*y`` matches ``x - y`` with the
    cofactor ``a``); the cofactor is carried over to the rhs.
    """

    name: str
    lhs: Expr
    rhs: Expr
    bidirectional: bool = False

    @property
    def matches_terms(self) -> bool:
        return isinstance(self.lhs, Sum) and len(self.lhs.terms) > 1

    def __str__(self) -> str:
        return f"{self.name}: {to_text(self.lhs)} -> {to_text(self.rhs)}"


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[Rule, ...] = ()
    sources: tuple[str, ...] = ()

    def __post_init__(self):
        names = [r.name for r in self.rules]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise RuleError(f"duplicate rule name(s): {', '.join(sorted(dup))}")

    def __iter__(self) -> Iterator[Rule]:
        return iter(self.rules)

    def __len__(self) -> int:
        return len(self.rules)

    @property
    def names(self) -> list[str]:
        return [r.name for r in self.rules]

    def get(self, name: str) -> Rule:
        for r in self.rules:
            if r.name == name:
                return r
        raise KeyError(name)

    def merged(self, other: RuleSet) -> RuleSet:
        """Union; a rule present in both under the same name must be identical."""
        rules = list(self.rules)
        for r in other.rules:
            if r.name in self.names:
                if self.get(r.name) != r:
                    raise RuleError(f"duplicate rule name {r.name} with a different definition")
                continue
            rules.append(r)
        return RuleSet(tuple(rules), self.sources + other.sources)

    def restricted(self, names: Iterable[str]) -> RuleSet:
        wanted = set(names)
        return RuleSet(tuple(r for r in self.rules if r.name in wanted), self.sources)


_RULE_LINE = re.compile(r"^\s*([A-Za-z][\w\-]*)\s*:\s*(.+?)\s*$")


def _vars(e: Expr) -> set[str]:
    return {n.name for n in e.walk() if isinstance(n, Var)}


def _check_sides(name: str, lhs: Expr, rhs: Expr, line: int | None, source: str | None) -> None:
    missing = _vars(rhs) - _vars(lhs)
    if missing:
        raise RuleError(
            f"rule {name}: variable(s) {', '.join(sorted(missing))} on the right do not occur on the left",
            line, source,
        )
    try:
        lhs_free = free_indices(lhs)
        rhs_free = free_indices(rhs)
    except IndexStructureError as err:
        raise RuleError(f"rule {name}: {err}", line, source) from None
    if not rhs.is_zero and lhs_free != rhs_free:
        raise RuleError(
            f"rule {name}: free indices differ between sides "
            f"({', '.join(sorted(map(str, lhs_free)))} vs {', '.join(sorted(map(str, rhs_free)))})",
            line, source,
        )
    if isinstance(lhs, Var):
        raise RuleError(f"rule {name}: a bare variable cannot be a left-hand side", line, source)


def parse_rule_line(
    text: str, registry: HeadRegistry | None = None, *, line: int | None = None,
    source: str | None = None,
) -> list[Rule]:
    """Parse one ``name: LHS -> RHS`` (or ``<->``) line into directed rules."""
    m = _RULE_LINE.match(text)
    if not m:
        raise RuleError(f"expected 'name: LHS -> RHS', got {text.strip()!r}", line, source)
    name, body = m.groups()
    if "<->" in body:
        lhs_text, rhs_text = body.split("<->", 1)
        bidirectional = True
    elif "->" in body:
        lhs_text, rhs_text = body.split("->", 1)
        bidirectional = False
    else:
        raise RuleError(f"rule {name}: missing '->' or '<->'", line, source)
    registry = registry if registry is not None else HeadRegistry()
    sides = []
    for part in (lhs_text, rhs_text):
        try:
            sides.append(parse_pattern(part.strip(), registry))
        except ParseError as err:
            raise RuleError(f"rule {name}: {err.message} in {part.strip()!r}", line, source) from None
    lhs, rhs = sides
    _check_sides(name, lhs, rhs, line, source)
    if not bidirectional:
        return [Rule(name, lhs, rhs)]
    _check_sides(name, rhs, lhs, line, source)
    return [Rule(f"{name}:fwd", lhs, rhs, True), Rule(f"{name}:rev", rhs, lhs, True)]


def load_rules(text: str, registry: HeadRegistry | None = None, source: str = "<string>") -> RuleSet:
    """Parse and validate a rule file.

    Bidirectional rules become two directed rules suffixed ``:fwd`` and
    ``:rev``. Raises :class:`RuleError` on syntax errors, free-index
    mismatches, right-hand variables missing on the left and duplicate names.
    """
    registry = registry if registry is not None else HeadRegistry()
    rules: list[Rule] = []
    for n, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        if not body.strip():
            continue
        for rule in parse_rule_line(body, registry, line=n, source=source):
            if any(r.name == rule.name for r in rules):
                raise RuleError(f"duplicate rule name {rule.name}", n, source)
            rules.append(rule)
    return RuleSet(tuple(rules), (source,))


def data_text(name: str) -> str:
    return resources.files("qftsearch").joinpath("data", name).read_text(encoding="utf-8")


def seed_rules(registry: HeadRegistry | None = None) -> RuleSet:
    """The seed rule base: field-strength definition (both directions),
    free Maxwell equation of motion, and the product rule."""
    return load_rules(data_text("seed.rules"), registry, source="seed.rules")


# -- applying rules ---------------------------------------------------------


@dataclass(frozen=True)
class StepRecord:
    rule: Rule
    position: Position
    binding: Binding
    result: Expr

    @property
    def rule_name(self) -> str:
        return self.rule.name

    def describe(self) -> str:
        return f"{self.rule.name} at {format_position(self.position)}"


class ApplyError(ValueError):
    pass


def _redex_matches(rule: Rule, e: Expr, dim: int) -> Iterator[tuple[Position, Binding]]:
    for pos, sub in positions(e):
        if rule.matches_terms:
            if not isinstance(sub, Sum):
                continue
            size = len(rule.lhs.terms)
            for picks in itertools.combinations(range(len(sub.terms)), size):
                for b in match_sum_terms(rule.lhs, [sub.terms[k] for k in picks], dim):
                    yield pos + (picks,), b
        else:
            for b in match_signed(rule.lhs, sub, dim):
                yield pos, b


def _rewrite(rule: Rule, e: Expr, pos: Position, b: Binding, dim: int) -> Expr:
    template = with_cofactor(rule.rhs) if rule.matches_terms else rule.rhs
    if b.sign != 1:
        template = Product(Fraction(b.sign), (template,))
        b = b.with_sign(1)
    return canonicalize(replace_at(e, pos, instantiate(template, b, dim)), dim)


def apply_at(rule: Rule, e: Expr, pos: Position, b: Binding, dim: int = DEFAULT_DIMENSION) -> Expr:
    """Rewrite the subexpression of ``e`` at ``pos`` with ``rule`` under ``b``.

    Raises :class:`StalePositionError` when ``pos`` does not address a
    subexpression of ``e`` and :class:`ApplyError` when ``b`` is not a match
    of the rule there.
    """
    sub = subexpr_at(e, pos)
    if rule.matches_terms:
        if not pos or not isinstance(pos[-1], tuple):
            raise StalePositionError("a sum rule needs a term selection")
        ok = b in match_sum_terms(rule.lhs, sub.terms, dim)
    else:
        ok = b in match_signed(rule.lhs, sub, dim)
    if not ok:
        raise ApplyError(f"binding {b} is not a match of {rule.name} at {format_position(pos)}")
    return _rewrite(rule, e, pos, b, dim)


def successors(e: Expr, rs: RuleSet, dim: int = DEFAULT_DIMENSION) -> list[tuple[Expr, StepRecord]]:
    """Every expression one rule application away from ``e``.

    Enumeration order is rules in rule-set order, then positions in preorder,
    then bindings in match order. Results are deduplicated by canonical form
    keeping the first provenance; rewrites that give back ``e`` are dropped.
    """
    out: list[tuple[Expr, StepRecord]] = []
    seen = {e}
    for rule in rs:
        for pos, b in _redex_matches(rule, e, dim):
            new = _rewrite(rule, e, pos, b, dim)
            if new in seen:
                continue
            seen.add(new)
            out.append((new, StepRecord(rule, pos, b, new)))
    return out


__all__ = [
    "Rule", "RuleSet", "RuleError", "StepRecord", "ApplyError", "load_rules",
    "parse_rule_line", "seed_rules", "apply_at", "successors", "data_text",
]
