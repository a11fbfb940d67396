import random
from itertools import combinations

import pytest
from hypothesis import given, settings

from ppfs.oracle import brute_force_quick_reduct
from ppfs.rough import (
    NO_IMPROVEMENT,
    UNIFORM_DECISION,
    AttributeSet,
    DecisionTable,
    DependencyDegree,
    EvaluationError,
    InvalidAttributeError,
    TableError,
    boundary_region,
    decision_classes,
    dependency_degree,
    lower_approximation,
    negative_region,
    partition_by,
    positive_region,
    quick_reduct,
    upper_approximation,
)

from conftest import make_table, table_and_subset

AGE, LEMS = AttributeSet((0,)), AttributeSet((1,))
BOTH = AttributeSet((0, 1))


def group_oracle(table, cols):
    groups = {}
    for i, oid in enumerate(table.object_ids):
        key = tuple(table.value(i, c) for c in cols)
        groups.setdefault(key, set()).add(oid)
    return {frozenset(g) for g in groups.values()}


def test_partition_by_age(walk):
    ec = partition_by(walk, AGE)
    blocks = dict(zip(ec.blocks, ec.purity))
    assert blocks == {
        frozenset({"x1", "x2", "x6"}): False,
        frozenset({"x3", "x4"}): False,
        frozenset({"x5", "x7"}): True,
    }
    assert ec.block_of["x6"] == ec.block_of["x1"]


def test_partition_by_empty_set(walk):
    ec = partition_by(walk, AttributeSet())
    assert ec.blocks == (walk.universe,)
    assert ec.purity == (False,)


def test_partition_by_matches_row_grouping():
    rng = random.Random(11)
    t = make_table(rng, 6, 3)
    assert set(partition_by(t, AttributeSet((0, 1))).blocks) == group_oracle(t, [0, 1])


def test_partition_by_rejects_bad_index(walk):
    with pytest.raises(InvalidAttributeError):
        partition_by(walk, AttributeSet((2,)))


def test_attribute_set_invariants():
    with pytest.raises(InvalidAttributeError):
        AttributeSet((1, 0))
    with pytest.raises(InvalidAttributeError):
        AttributeSet((0, 0))
    assert AttributeSet.of([2, 0, 2]) == AttributeSet((0, 2))


def test_lower_and_upper_on_walk(walk):
    no_class = {"x2", "x3", "x5", "x7"}
    yes_class = {"x1", "x4", "x6"}
    assert lower_approximation(walk, AGE, no_class) == {"x5", "x7"}
    assert upper_approximation(walk, AGE, yes_class) == {"x1", "x2", "x6", "x3", "x4"}
    assert lower_approximation(walk, AGE, walk.universe) == walk.universe
    assert upper_approximation(walk, AGE, set()) == frozenset()


def test_singleton_blocks_when_rows_unique():
    t = DecisionTable.from_rows(["a", "b"], [["1", "2"], ["1", "3"], ["2", "2"]], ["y", "n", "y"])
    assert upper_approximation(t, AttributeSet((0, 1)), {"x2"}) == {"x2"}


@pytest.mark.parametrize(
    "subset, expected",
    [(AGE, {"x5", "x7"}), (LEMS, {"x1", "x2"}), (BOTH, {"x1", "x2", "x5", "x6", "x7"})],
)
def test_positive_region_walk(walk, subset, expected):
    assert positive_region(walk, subset) == expected


@pytest.mark.parametrize("subset, num", [(AGE, 2), (LEMS, 2), (BOTH, 5)])
def test_dependency_degree_walk(walk, subset, num):
    g = dependency_degree(walk, subset)
    assert (g.numerator, g.denominator) == (num, 7)


def test_negative_and_boundary_walk(walk):
    assert negative_region(walk, AGE) == frozenset()
    assert negative_region(walk, LEMS) == frozenset()
    assert boundary_region(walk, AGE) == {"x1", "x2", "x3", "x4", "x6"}


def test_boundary_crisp_and_fully_rough():
    crisp = DecisionTable.from_rows(["a"], [["1"], ["2"], ["3"]], ["y", "n", "y"])
    assert boundary_region(crisp, AttributeSet((0,))) == frozenset()
    const = DecisionTable.from_rows(["a"], [["1"], ["1"], ["1"]], ["y", "n", "y"])
    assert boundary_region(const, AttributeSet((0,))) == const.universe


def test_dependency_degree_exact_comparisons():
    assert DependencyDegree(2, 4) == DependencyDegree(1, 2)
    assert DependencyDegree(2, 7) < DependencyDegree(5, 7)
    assert str(DependencyDegree(7, 7)) == "1/1"
    assert str(DependencyDegree(0, 4)) == "0/1"
    with pytest.raises(ValueError):
        DependencyDegree(5, 4)
    with pytest.raises(ValueError):
        DependencyDegree(0, 0)


def test_table_invariants():
    with pytest.raises(TableError):
        DecisionTable.from_rows(["a", "a"], [["1", "2"]], ["y"])
    with pytest.raises(TableError):
        DecisionTable.from_rows(["a"], [["1"], ["2"]], ["y", "n"], object_ids=["o", "o"])
    with pytest.raises(TableError):
        DecisionTable.from_rows([], [[]], ["y"])


# -- region algebra against a literal reading of the region formulas ------

def regions_oracle(table, p):
    ids = table.object_ids
    cols = list(p)

    def same(i, j):
        return all(table.value(i, c) == table.value(j, c) for c in cols)

    classes = decision_classes(table)
    idx = table.row_index()
    lower, upper = set(), set()
    for x in classes:
        for o in ids:
            peers = {ids[j] for j in range(table.size) if same(idx[o], j)}
            if peers <= x:
                lower.add(o)
            if peers & x:
                upper.add(o)
    return lower, table.universe - upper, upper - lower


@settings(max_examples=150, deadline=None)
@given(table_and_subset())
def test_regions_match_formula_oracle(tp):
    t, p = tp
    pos, neg, bnd = regions_oracle(t, p)
    assert positive_region(t, p) == pos
    assert negative_region(t, p) == neg == frozenset()
    assert boundary_region(t, p) == bnd == t.universe - positive_region(t, p)
    for x in decision_classes(t):
        assert lower_approximation(t, p, x) <= x <= upper_approximation(t, p, x)


@settings(max_examples=150, deadline=None)
@given(table_and_subset())
def test_dependency_is_monotone(tp):
    t, p = tp
    g = dependency_degree(t, p)
    for extra in range(len(t.attributes)):
        assert dependency_degree(t, p.add(extra)) >= g


@settings(max_examples=100, deadline=None)
@given(table_and_subset())
def test_full_dependency_iff_consistent(tp):
    t, _ = tp
    everything = AttributeSet(tuple(range(len(t.attributes))))
    rows = t.rows_as_strings()
    conflict = any(
        rows[i] == rows[j] and t.decision[i] != t.decision[j] for i, j in combinations(range(t.size), 2)
    )
    g = dependency_degree(t, everything)
    assert (g.numerator == g.denominator) == (not conflict)


# -- QuickReduct -----------------------------------------------------------

def test_quick_reduct_walk(walk):
    r = quick_reduct(walk)
    assert r.reduct == BOTH
    assert [str(g) for _, g in r.gamma_trace] == ["2/7", "5/7"]
    # Age and LEMS tie at 2/7 in round one; the lowest index wins.
    assert [a for a, _ in r.gamma_trace] == [0, 1]
    assert r.rounds[0] == [(0, DependencyDegree(2, 7)), (1, DependencyDegree(2, 7))]


def test_quick_reduct_perfect_predictor():
    t = DecisionTable.from_rows(["a", "b"], [["y", "1"], ["n", "1"], ["y", "2"]], ["y", "n", "y"])
    r = quick_reduct(t)
    assert r.reduct == AttributeSet((0,))
    assert r.gamma == DependencyDegree(1, 1)
    assert len(r.gamma_trace) == 1


def test_quick_reduct_uniform_decision():
    t = DecisionTable.from_rows(["a"], [["1"], ["2"]], ["y", "y"])
    r = quick_reduct(t)
    assert r.reduct == AttributeSet()
    assert r.note == UNIFORM_DECISION


def test_quick_reduct_no_improvement_flagged():
    t = DecisionTable.from_rows(["a"], [["1"], ["1"]], ["y", "n"])
    r = quick_reduct(t)
    assert r.reduct == AttributeSet()
    assert r.note == NO_IMPROVEMENT


def test_quick_reduct_matches_stepwise_oracle():
    rng = random.Random(5)
    for _ in range(40):
        t = make_table(rng, 20, 8, n_values=rng.randint(2, 4), n_classes=rng.randint(2, 3))
        r = quick_reduct(t)
        chosen, trace = brute_force_quick_reduct(t)
        assert [a for a, _ in r.gamma_trace] == chosen
        assert [g for _, g in r.gamma_trace] == trace


def test_quick_reduct_trace_strictly_increasing():
    rng = random.Random(9)
    for _ in range(50):
        t = make_table(rng, rng.randint(2, 30), rng.randint(1, 8), 3, 3)
        gammas = [g for _, g in quick_reduct(t).gamma_trace]
        assert all(a < b for a, b in zip(gammas, gammas[1:]))


def test_quick_reduct_wraps_evaluator_failure(walk):
    def broken(p):
        if len(p) == 1:
            raise RuntimeError("boom")
        return dependency_degree(walk, p)

    with pytest.raises(EvaluationError) as info:
        quick_reduct(walk, broken)
    assert info.value.round_no == 1
    assert info.value.subset == AGE
