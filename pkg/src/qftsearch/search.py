"""Breadth-first derivation search with cycle control.

``search`` is the single derivation entry point: a problem is a start
expression plus a goal predicate, the knowledge is a rule set, and the answer
is a shortest derivation (or a report of why none was found).
"""

from __future__ import annotations

import json
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Union

from .canonical import DEFAULT_DIMENSION, canonicalize, free_indices, rename_indices
from .expr import Expr, HeadRegistry, to_text
from .matching import format_position, match_pattern
from .parser import parse_expr, parse_pattern
from .rules import RuleSet, StepRecord, apply_at, successors

logger = logging.getLogger(__name__)


class GoalError(ValueError):
    pass


class ReplayError(RuntimeError):
    pass


# -- goals ------------------------------------------------------------------


@dataclass(frozen=True)
class IsZero:
    def __str__(self):
        return "is-zero"


@dataclass(frozen=True)
class EqualsCanonical:
    target: Expr

    def __str__(self):
        return f"equals {to_text(self.target)}"


@dataclass(frozen=True)
class MatchesPattern:
    pattern: Expr

    def __str__(self):
        return f"matches {to_text(self.pattern)}"


@dataclass(frozen=True)
class SymmetricIn:
    first: str
    second: str

    def __str__(self):
        return f"symmetric-in {self.first} {self.second}"


Goal = Union[IsZero, EqualsCanonical, MatchesPattern, SymmetricIn]


def eval_goal(g: Goal, e: Expr, dim: int = DEFAULT_DIMENSION) -> bool:
    """Evaluate goal ``g`` on canonical expression ``e``."""
    if isinstance(g, IsZero):
        return e.is_zero
    if isinstance(g, EqualsCanonical):
        return canonicalize(g.target, dim) == e
    if isinstance(g, MatchesPattern):
        return bool(match_pattern(g.pattern, e, dim))
    if isinstance(g, SymmetricIn):
        names = {i.name for i in free_indices(e)}
        missing = [n for n in (g.first, g.second) if n not in names]
        if missing and not e.is_zero:
            raise GoalError(f"symmetric-in: {', '.join(missing)} not free in {to_text(e)}")
        swapped = rename_indices(e, {g.first: g.second, g.second: g.first})
        return canonicalize(swapped, dim) == canonicalize(e, dim)
    raise GoalError(f"unknown goal {g!r}")


def parse_goal(text: str, registry: HeadRegistry | None = None) -> Goal:
    """Parse ``is-zero``, ``equals <expr>``, ``matches <pattern>`` or
    ``symmetric-in <i> <j>``."""
    text = text.strip()
    head, _, rest = text.partition(" ")
    rest = rest.strip()
    if head == "is-zero" and not rest:
        return IsZero()
    if head == "equals" and rest:
        return EqualsCanonical(parse_expr(rest, registry))
    if head == "matches" and rest:
        return MatchesPattern(parse_pattern(rest, registry))
    if head == "symmetric-in":
        parts = rest.split()
        if len(parts) == 2:
            return SymmetricIn(*parts)
    raise GoalError(
        f"bad goal {text!r}; expected is-zero | equals <expr> | matches <pattern> | symmetric-in <i> <j>"
    )


# -- search -----------------------------------------------------------------


@dataclass(frozen=True)
class SearchBudget:
    max_depth: int = 12
    max_states: int = 200_000
    max_seconds: float = 60.0

    def __post_init__(self):
        if self.max_depth <= 0 or self.max_states <= 0 or self.max_seconds <= 0:
            raise ValueError("search budget limits must be positive")


@dataclass(frozen=True)
class DerivationState:
    expr: Expr
    path: tuple[StepRecord, ...] = ()

    @property
    def depth(self) -> int:
        return len(self.path)


@dataclass
class SearchStats:
    expanded: int = 0
    visited: int = 0
    frontier_peak: int = 0
    depth_reached: int = 0

    def as_dict(self) -> dict:
        return {
            "expanded": self.expanded,
            "visited": self.visited,
            "frontier_peak": self.frontier_peak,
            "depth_reached": self.depth_reached,
        }

    def __str__(self) -> str:
        return (
            f"expanded={self.expanded} visited={self.visited} "
            f"frontier_peak={self.frontier_peak} depth_reached={self.depth_reached}"
        )


@dataclass
class Found:
    state: DerivationState
    stats: SearchStats
    status = "found"


@dataclass
class Exhausted:
    stats: SearchStats
    status = "exhausted"


@dataclass
class BudgetExceeded:
    stats: SearchStats
    limit: str = "depth"
    status = "budget-exceeded"


SearchResult = Union[Found, Exhausted, BudgetExceeded]


def search(
    start: Expr,
    rs: RuleSet,
    goal: Goal,
    budget: SearchBudget | None = None,
    dim: int = DEFAULT_DIMENSION,
) -> SearchResult:
    """Breadth-first search from ``start`` for a state satisfying ``goal``.

    States are keyed by canonical form; a form seen once is never enqueued
    again, so search terminates whenever the reachable space is finite. The
    goal is tested when a state is dequeued, starting with ``start`` itself
    at depth 0, so a returned derivation is as short as any derivation
    reaching a goal state. The depth limit caps the length of derivations
    considered; states at the limit are not expanded.
    """
    budget = budget or SearchBudget()
    start = canonicalize(start, dim)
    stats = SearchStats(visited=1, frontier_peak=1)
    visited = {start}
    queue: deque[DerivationState] = deque([DerivationState(start)])
    deadline = time.monotonic() + budget.max_seconds
    truncated = False
    while queue:
        state = queue.popleft()
        stats.depth_reached = max(stats.depth_reached, state.depth)
        if eval_goal(goal, state.expr, dim):
            logger.debug("goal reached at depth %d: %s", state.depth, stats)
            return Found(state, stats)
        if time.monotonic() > deadline:
            return BudgetExceeded(stats, "time")
        at_limit = state.depth >= budget.max_depth
        if not at_limit:
            stats.expanded += 1
        for new, step in successors(state.expr, rs, dim):
            if new in visited:
                continue
            if at_limit:
                truncated = True
                break
            if len(visited) >= budget.max_states:
                return BudgetExceeded(stats, "states")
            visited.add(new)
            stats.visited += 1
            queue.append(DerivationState(new, state.path + (step,)))
        stats.frontier_peak = max(stats.frontier_peak, len(queue))
    if truncated:
        return BudgetExceeded(stats, "depth")
    return Exhausted(stats)


# -- transcripts ------------------------------------------------------------


@dataclass(frozen=True)
class TranscriptLine:
    depth: int
    expr: Expr
    rule: str
    position: str = ""
    binding: dict = field(default_factory=dict, hash=False, compare=False)

    def as_record(self) -> dict:
        return {
            "depth": self.depth,
            "rule": self.rule,
            "position": self.position,
            "binding": self.binding,
            "expr": to_text(self.expr),
        }


@dataclass(frozen=True)
class Transcript:
    lines: tuple[TranscriptLine, ...]

    def to_text(self) -> str:
        out = []
        for line in self.lines:
            where = f" at {line.position}" if line.position else ""
            out.append(f"[{line.depth}] {line.rule}{where}: {to_text(line.expr)}")
        return "\n".join(out)

    def records(self) -> list[dict]:
        return [line.as_record() for line in self.lines]

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(r, sort_keys=True) for r in self.records())

    def __len__(self) -> int:
        return len(self.lines)


def explain(d: DerivationState, start: Expr, dim: int = DEFAULT_DIMENSION) -> Transcript:
    """Step-by-step listing of a derivation, replayed before it is emitted."""
    current = canonicalize(start, dim)
    lines = [TranscriptLine(0, current, "canonical")]
    for depth, step in enumerate(d.path, start=1):
        try:
            replayed = apply_at(step.rule, current, step.position, step.binding, dim)
        except (LookupError, ValueError) as err:
            raise ReplayError(f"step {depth} ({step.describe()}) does not replay: {err}") from err
        if replayed != step.result:
            raise ReplayError(f"step {depth} ({step.describe()}) replays to a different expression")
        current = replayed
        lines.append(
            TranscriptLine(depth, current, step.rule.name, format_position(step.position),
                           step.binding.as_text())
        )
    if current != d.expr:
        raise ReplayError("derivation does not end at the reported expression")
    return Transcript(tuple(lines))


__all__ = [
    "Goal", "IsZero", "EqualsCanonical", "MatchesPattern", "SymmetricIn", "GoalError",
    "ReplayError", "eval_goal", "parse_goal", "SearchBudget", "DerivationState",
    "SearchStats", "Found", "Exhausted", "BudgetExceeded", "SearchResult", "search",
    "TranscriptLine", "Transcript", "explain",
]
