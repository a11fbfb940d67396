import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ppfs.netsim import Harness, ProtocolAbort, audit_transcript
from ppfs.oracle import forbidden_values, random_partition
from ppfs.partition import Mode, PartyView, merge, split_horizontal
from ppfs.protocols import (
    HorizontalEvaluator,
    VerticalEvaluator,
    _root_labels,
    distributed_quick_reduct,
    hp_evaluate,
    refine_labels,
    vp_evaluate,
)
from ppfs.rough import AttributeSet, DecisionTable, EvaluationError, dependency_degree, quick_reduct

from conftest import make_table, tables

AGE, LEMS, BOTH = AttributeSet((0,)), AttributeSet((1,)), AttributeSet((0, 1))
KEY = bytes(16)


@pytest.mark.parametrize(
    "subset, locals_, gamma",
    [
        (AGE, {0: (0, 1, 4), 1: (3, 1, 3)}, "2/7"),
        (LEMS, {0: (2, 0, 4), 1: (0, 0, 3)}, "2/7"),
        (BOTH, {0: (2, 0, 4), 1: (3, 0, 3)}, "5/7"),
    ],
)
def test_hp_evaluate_walk(walk_hp, subset, locals_, gamma):
    _, views = walk_hp
    dg = hp_evaluate(subset, views, Harness(2, seed=3))
    assert str(dg.gamma) == gamma
    assert dg.universe == 7
    pos = {p: c[0] for p, c in dg.local_contributions.items()}
    inv = sum(c[1] for c in dg.local_contributions.values())
    assert pos == {p: v[0] for p, v in locals_.items()}
    assert inv == (1 if subset == AGE else 0)
    assert {p: c[2] for p, c in dg.local_contributions.items()} == {0: 4, 1: 3}


def test_hp_schema_mismatch_aborts(walk):
    a = PartyView(0, walk.select_rows([0, 1, 2]), (0, 1))
    renamed = DecisionTable.from_rows(["Age", "Speed"], walk.rows_as_strings()[3:], ["No", "Yes", "No", "Yes"])
    b = PartyView(1, renamed, (0, 1))
    with pytest.raises(ProtocolAbort, match="schema"):
        HorizontalEvaluator([a, b], Harness(2))


def test_hp_empty_fragment_contributes_zeros(walk):
    partition, views = split_horizontal(walk, [7, 0])
    run = distributed_quick_reduct(partition, views, seed=1)
    assert [str(g) for _, g in run.result.gamma_trace] == ["2/7", "5/7"]
    assert all(h.local_contributions[1] == (0, 0, 0) for h in run.history)


def test_vp_evaluate_root_age(walk_vp):
    partition, views = walk_vp
    root = _root_labels(views[0], KEY)
    dg, labels = vp_evaluate(AGE, views, partition, root, Harness(2), KEY)
    assert str(dg.gamma) == "2/7"
    assert set(dg.impure_blocks) == {frozenset({"x1", "x2", "x6"}), frozenset({"x3", "x4"})}
    assert labels.impure_count() == 5


def test_vp_evaluate_lems_then_age(walk_vp):
    partition, views = walk_vp
    root = _root_labels(views[1], KEY)
    lems_state, blocks = refine_labels(views[1], root, 1, KEY)
    assert set(blocks) == {frozenset({"x3", "x4"}), frozenset({"x5", "x6", "x7"})}
    dg, _ = vp_evaluate(BOTH, views, partition, lems_state, Harness(2), KEY)
    assert dg.impure_blocks == [frozenset({"x3", "x4"})]
    assert str(dg.gamma) == "5/7"


def test_vp_disjoint_impure_blocks_give_one():
    # attribute a is impure on {x1,x2}, b on {x3,x4}; together nothing stays impure
    t = DecisionTable.from_rows(["a", "b"], [["p", "1"], ["p", "2"], ["q", "3"], ["r", "3"]], ["y", "n", "y", "n"])
    from ppfs.partition import split_vertical

    partition, views = split_vertical(t, [AttributeSet((0,)), AttributeSet((1,))])
    a_state, _ = refine_labels(views[0], _root_labels(views[0], KEY), 0, KEY)
    dg, _ = vp_evaluate(AttributeSet((0, 1)), views, partition, a_state, Harness(2), KEY)
    assert str(dg.gamma) == "1/1"


def test_vp_misaligned_rows_abort(walk):
    from ppfs.partition import Partition

    t1 = walk.select_attributes([0])
    t2 = walk.select_attributes([1]).select_rows([1, 0, 2, 3, 4, 5, 6])
    partition = Partition(Mode.VERTICAL, ((0,), (1,)), walk.attributes, walk.classes)
    views = [PartyView(0, t1, (0,), 7), PartyView(1, t2, (1,), 7)]
    with pytest.raises(ProtocolAbort, match="order"):
        VerticalEvaluator(partition, views, Harness(2))


@pytest.mark.parametrize("fixture", ["walk_hp", "walk_vp"])
def test_distributed_walk(fixture, request):
    partition, views = request.getfixturevalue(fixture)
    run = distributed_quick_reduct(partition, views, seed=7)
    assert run.result.reduct == BOTH
    assert [str(g) for _, g in run.result.gamma_trace] == ["2/7", "5/7"]


def test_hp_message_budget_walk(walk_hp):
    partition, views = walk_hp
    run = distributed_quick_reduct(partition, views, seed=1)
    p = partition.party_count
    evaluations = run.result.evaluations
    assert run.transcript.counts["FingerprintSet"] == evaluations * p * (p - 1)
    assert run.transcript.counts["MaskedSum"] == evaluations * p
    assert run.transcript.counts["CandidateGamma"] == evaluations


def test_evaluator_abort_carries_round(walk_hp):
    partition, views = walk_hp
    harness = Harness(2, seed=0)

    def corrupt(msg):
        if msg.kind == "SumResult" and msg.round == 1 and msg.index > 10:
            return b"\x00"
        return None

    harness.tamper = corrupt
    with pytest.raises(EvaluationError) as info:
        distributed_quick_reduct(partition, views, harness=harness)
    assert info.value.round_no == 1


def _check_equivalence(table, mode, parties, rng, seed):
    partition, views = random_partition(rng, table, mode, parties)
    merged = merge(partition, views)
    run = distributed_quick_reduct(partition, views, seed=seed)
    for h in run.history:
        assert h.gamma == dependency_degree(merged, h.subset)
    central = quick_reduct(merged)
    assert central.same_selection(run.result)
    assert audit_transcript(run.transcript, [*forbidden_values(merged), *run.harness.issued_secrets]).clean
    return run


@settings(max_examples=60, deadline=None)
@given(tables(), st.sampled_from([Mode.HORIZONTAL, Mode.VERTICAL]), st.integers(2, 5), st.integers(0, 2**32))
def test_oracle_equivalence_property(table, mode, parties, seed):
    _check_equivalence(table, mode, parties, random.Random(seed), seed)


def test_hp_containment_and_cache():
    rng = random.Random(4)
    hits = 0
    for _ in range(30):
        t = make_table(rng, 25, 5, 3, 2)
        partition, views = random_partition(rng, t, Mode.HORIZONTAL, rng.randint(2, 5))
        harness = Harness(partition.party_count, 0)
        ev = HorizontalEvaluator(views, harness, partition.classes)
        quick_reduct(partition, ev)
        for h in ev.history:
            local_pos = sum(c[0] for c in h.local_contributions.values())
            assert h.gamma.numerator <= local_pos
        hits += ev.cache_hits
    assert hits > 0


def test_vp_refinement_non_increasing():
    rng = random.Random(6)
    for _ in range(30):
        t = make_table(rng, 25, 6, 3, 3)
        partition, views = random_partition(rng, t, Mode.VERTICAL, rng.randint(2, 4))
        run = distributed_quick_reduct(partition, views, seed=1)
        impure = [len(t.object_ids) - g.numerator for _, g in run.result.gamma_trace]
        assert impure == sorted(impure, reverse=True)


def test_hp_masked_sums_linear_in_parties():
    rng = random.Random(12)
    t = make_table(rng, 40, 6, 3, 2)
    counts = []
    for p in range(2, 9):
        partition, views = split_horizontal(t, [40 // p + (1 if i < 40 % p else 0) for i in range(p)])
        run = distributed_quick_reduct(partition, views, seed=3)
        counts.append(sum(1 for m in run.transcript if m.kind == "MaskedSum" and m.round == 1))
    xs = np.arange(2, 9)
    slope, intercept = np.polyfit(xs, counts, 1)
    resid = np.array(counts) - (slope * xs + intercept)
    r2 = 1 - (resid**2).sum() / ((np.array(counts) - np.mean(counts)) ** 2).sum()
    assert r2 > 0.999
    # the empty set plus six candidates, one ring hop per party
    assert counts == [7 * p for p in range(2, 9)]
