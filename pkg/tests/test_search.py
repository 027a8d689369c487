import pytest

from qftsearch import (
    BudgetExceeded, EqualsCanonical, Exhausted, Found, IsZero, MatchesPattern, SearchBudget,
    SymmetricIn, canonicalize, eval_goal, explain, load_rules, parse_expr, parse_goal, search,
    seed_rules,
)
from qftsearch.parser import parse_pattern
from qftsearch.rules import data_text
from qftsearch.search import GoalError

from support import TOY_SYSTEMS as SYSTEMS, shortest_distances



def run(name, budget=None):
    text, start, goal = SYSTEMS[name]
    rs = load_rules(text)
    s = canonicalize(parse_expr(start))
    return rs, s, parse_goal(goal), search(s, rs, parse_goal(goal), budget or SearchBudget(max_depth=50))


@pytest.mark.parametrize("name", sorted(SYSTEMS))
def test_search_matches_exhaustive_enumeration(name):
    rs, start, goal, result = run(name)
    dist = shortest_distances(start, rs)
    assert len(dist) <= 50
    goal_dists = [d for e, d in dist.items() if eval_goal(goal, e)]
    if not goal_dists:
        assert isinstance(result, Exhausted)
        assert result.stats.visited == len(dist)
        assert result.stats.expanded == len(dist)
        return
    assert isinstance(result, Found)
    k = min(goal_dists)
    assert result.state.depth == k
    assert eval_goal(goal, result.state.expr)
    within = lambda n: sum(1 for d in dist.values() if d <= n)
    assert within(k) <= result.stats.visited <= within(k + 1)


def test_packaged_toy_rules():
    assert load_rules(data_text("toy.rules")).names == ["r1", "r2", "r3"]


def test_toy_path_is_r1_then_r3():
    _, start, _, result = run("toy-abc")
    assert [s.rule_name for s in result.state.path] == ["r1", "r3"]
    t = explain(result.state, start)
    assert len(t) == 3
    assert [line.rule for line in t.lines] == ["canonical", "r1", "r3"]


def test_unreachable_goal_exhausts_finite_space():
    _, _, _, result = run("toy-abc-unreachable")
    assert isinstance(result, Exhausted)
    assert result.status == "exhausted"
    assert result.stats.visited == 3


def test_two_cycle_terminates():
    _, _, _, result = run("two-cycle")
    assert isinstance(result, Exhausted)
    assert result.stats.visited == 2


def test_deterministic():
    first = run("three-cycle-pattern")[3]
    second = run("three-cycle-pattern")[3]
    assert first.state == second.state
    assert first.stats == second.stats


# -- budgets --------------------------------------------------------------------------


def test_depth_budget():
    _, _, _, result = run("chain-with-shortcut", SearchBudget(max_depth=1))
    assert isinstance(result, BudgetExceeded)
    assert result.limit == "depth"


def test_depth_budget_exactly_sufficient():
    _, _, _, result = run("chain-with-shortcut", SearchBudget(max_depth=2))
    assert isinstance(result, Found) and result.state.depth == 2


def test_state_budget():
    _, _, _, result = run("three-cycle-multisets", SearchBudget(max_states=3))
    assert isinstance(result, BudgetExceeded)
    assert result.limit == "states"
    assert result.stats.visited <= 3


def test_time_budget():
    _, _, _, result = run("three-cycle-multisets", SearchBudget(max_seconds=1e-9))
    assert isinstance(result, BudgetExceeded)
    assert result.limit == "time"


def test_enlarging_the_budget_keeps_the_path():
    paths = set()
    for depth in (3, 5, 20):
        result = run("three-cycle-pattern", SearchBudget(max_depth=depth))[3]
        assert isinstance(result, Found)
        paths.add(tuple(s.rule_name for s in result.state.path))
    assert len(paths) == 1


@pytest.mark.parametrize("kwargs", [{"max_depth": 0}, {"max_states": 0}, {"max_seconds": -1}])
def test_budget_validation(kwargs):
    with pytest.raises(ValueError):
        SearchBudget(**kwargs)


# -- tensor searches ------------------------------------------------------------------


def test_antisymmetry_cancels_at_depth_zero():
    start = parse_expr("F[_mu,_nu]*F[^nu,^mu] + F[_mu,_nu]*F[^mu,^nu]")
    result = search(start, seed_rules(), IsZero())
    assert isinstance(result, Found) and result.state.depth == 0
    t = explain(result.state, start)
    assert len(t) == 1 and t.lines[0].rule == "canonical"


def test_equation_of_motion_in_one_step():
    start = parse_expr("d[_mu](F[^mu,^nu])")
    result = search(start, seed_rules(), IsZero())
    assert isinstance(result, Found) and result.state.depth == 1
    t = explain(result.state, start)
    assert [line.rule for line in t.lines] == ["canonical", "eom"]
    assert t.to_text().splitlines()[-1] == "[1] eom at root: 0"


# -- goals ----------------------------------------------------------------------------


def test_goal_examples():
    assert eval_goal(IsZero(), canonicalize(parse_expr("F[_a,_b] + F[_b,_a]")))
    assert eval_goal(SymmetricIn("mu", "nu"), parse_expr("eta[^mu,^nu]"))
    assert not eval_goal(SymmetricIn("mu", "nu"), parse_expr("d[^mu](A[^nu])"))
    assert eval_goal(EqualsCanonical(parse_expr("F[_x,_y]*F[^x,^y]")),
                     canonicalize(parse_expr("F[_a,_b]*F[^a,^b]")))
    assert eval_goal(MatchesPattern(parse_pattern("d[_a?](x?)")), parse_expr("d[_mu](A[_nu])"))


def test_symmetric_in_needs_free_indices():
    with pytest.raises(GoalError):
        eval_goal(SymmetricIn("mu", "rho"), parse_expr("eta[^mu,^nu]"))


@pytest.mark.parametrize("text, goal", [
    ("is-zero", IsZero()),
    ("symmetric-in mu nu", SymmetricIn("mu", "nu")),
    ("equals c", EqualsCanonical(parse_expr("c"))),
])
def test_parse_goal(text, goal):
    assert parse_goal(text) == goal


@pytest.mark.parametrize("text", ["", "is-zero now", "symmetric-in mu", "equals", "frobnicate"])
def test_bad_goals(text):
    with pytest.raises(GoalError):
        parse_goal(text)


def test_structured_transcript_records():
    start = parse_expr("d[_mu](F[^mu,^nu])")
    result = search(start, seed_rules(), IsZero())
    records = explain(result.state, start).records()
    assert records[0] == {"depth": 0, "rule": "canonical", "position": "", "binding": {},
                          "expr": "d[_d0](F[^d0,^nu])"}
    assert records[1]["rule"] == "eom" and records[1]["expr"] == "0"
