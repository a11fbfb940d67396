"""Brute-force reference computations and distributed-vs-centralized checks.

Nothing here reuses the grouping or region code of :mod:`ppfs.rough`; the
dependency degree is recomputed by comparing every pair of rows.
"""
from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Sequence

from . import netsim
from .netsim import Harness, audit_transcript
from .partition import Mode, Partition, PartyView, assign_rows, merge, split_vertical
from .protocols import distributed_quick_reduct
from .rough import AttributeSet, DecisionTable, DependencyDegree, dependency_degree, quick_reduct


def brute_force_gamma(table: DecisionTable, p: AttributeSet | Sequence[int]) -> DependencyDegree:
    """Count objects whose every p-indiscernible peer shares their class."""
    cols = list(p)
    rows = table.rows_as_strings()
    labels = [table.class_of(i) for i in range(table.size)]
    good = 0
    for i in range(table.size):
        ok = True
        for j in range(table.size):
            if labels[i] != labels[j] and all(rows[i][c] == rows[j][c] for c in cols):
                ok = False
                break
        good += ok
    return DependencyDegree(good, table.size)


def brute_force_quick_reduct(table: DecisionTable) -> tuple[list[int], list[DependencyDegree]]:
    """Step-by-step greedy search on :func:`brute_force_gamma`.

    Uses plain ``Fraction``-free integer comparisons: candidate ``g`` beats
    ``best`` when ``g.num * best.den > best.num * g.den``.
    """
    m = len(table.attributes)
    g0 = brute_force_gamma(table, [])
    if g0.numerator == g0.denominator:
        return [], []
    chosen: list[int] = []
    trace = []
    cur_num, cur_den = g0.numerator, g0.denominator
    while len(chosen) < m:
        best = None
        for x in range(m):
            if x in chosen:
                continue
            g = brute_force_gamma(table, sorted(chosen + [x]))
            if g.numerator * cur_den > cur_num * g.denominator:
                if best is None or g.numerator * best[1].denominator > best[1].numerator * g.denominator:
                    best = (x, g)
        if best is None:
            break
        chosen.append(best[0])
        trace.append(best[1])
        cur_num, cur_den = best[1].numerator, best[1].denominator
    return chosen, trace


def table_fingerprint(table: DecisionTable) -> str:
    h = hashlib.sha256()
    h.update(repr((table.attributes, table.decision_name, table.object_ids)).encode())
    for i in range(table.size):
        h.update(repr((tuple(table.value(i, a) for a in range(len(table.attributes))), table.class_of(i))).encode())
    return h.hexdigest()[:32]


def forbidden_values(table: DecisionTable) -> set[str]:
    """Every raw cell value, class symbol and row serialization."""
    out = set(table.classes)
    for a in range(len(table.attributes)):
        out.update(table.symbols[a])
    for i in range(table.size):
        cells = [table.value(i, a) for a in range(len(table.attributes))]
        out.add(",".join([*cells, table.class_of(i)]))
        out.add(",".join(cells))
    return {v for v in out if v}


@dataclass
class EquivalenceReport:
    table: str
    partition: dict
    comparisons: list[dict]
    reduct_match: bool
    centralized: dict
    distributed: dict
    transcript: dict
    audit: dict
    seed: int

    @property
    def passed(self) -> bool:
        return self.reduct_match and all(c["equal"] for c in self.comparisons)

    def first_mismatch(self) -> dict | None:
        return next((c for c in self.comparisons if not c["equal"]), None)

    def as_dict(self) -> dict:
        return {
            "pass": self.passed,
            "table": self.table,
            "partition": self.partition,
            "seed": self.seed,
            "reduct_match": self.reduct_match,
            "centralized": self.centralized,
            "distributed": self.distributed,
            "comparisons": self.comparisons,
            "first_mismatch": self.first_mismatch(),
            "transcript": self.transcript,
            "audit": self.audit,
        }


def summarize(result, table_attrs: Sequence[str]) -> dict:
    return {
        "selected_attributes": [table_attrs[a] for a in result.reduct],
        "gamma_trace": [str(g) for _, g in result.gamma_trace],
        "evaluations": result.evaluations,
        "note": result.note,
    }


def verify_run(
    table: DecisionTable,
    partition: Partition,
    views: Sequence[PartyView],
    seed: int = 0,
    tamper=None,
) -> EquivalenceReport:
    """Run centralized and distributed QuickReduct and compare them exactly.

    Every subset the distributed run evaluated is checked against the
    centralized degree, and both reducts and traces must agree. ``tamper``
    is installed on the harness to test that corruption is caught.
    """
    merged = merge(partition, views)
    central = quick_reduct(merged)
    harness = Harness(partition.party_count, seed)
    harness.tamper = tamper
    run = distributed_quick_reduct(partition, views, harness=harness)
    comparisons = []
    seen = set()
    for h in run.history:
        if h.subset in seen:
            continue
        seen.add(h.subset)
        truth = central.evaluated.get(h.subset)
        if truth is None:
            truth = dependency_degree(merged, h.subset)
        comparisons.append({
            "subset": h.subset.names(merged),
            "distributed": str(h.gamma),
            "centralized": str(truth),
            "equal": h.gamma == truth,
        })
    audit = audit_transcript(run.transcript, [*forbidden_values(merged), *harness.issued_secrets])
    return EquivalenceReport(
        table=table_fingerprint(merged),
        partition=partition.describe(),
        comparisons=comparisons,
        reduct_match=central.same_selection(run.result) and central.note == run.result.note,
        centralized=summarize(central, merged.attributes),
        distributed=summarize(run.result, merged.attributes),
        transcript=run.transcript.totals(),
        audit=audit.as_dict(),
        seed=seed,
    )


# -- fuzzing ---------------------------------------------------------------

def random_table(rng: random.Random, n_attrs=(1, 8), n_objects=(1, 30), n_values=(1, 4), n_classes=(2, 3)) -> DecisionTable:
    m = rng.randint(*n_attrs)
    n = rng.randint(*n_objects)
    alph = [rng.randint(*n_values) for _ in range(m)]
    k = rng.randint(*n_classes)
    rows = [[f"v{rng.randrange(alph[a])}" for a in range(m)] for _ in range(n)]
    dec = [f"c{rng.randrange(k)}" for _ in range(n)]
    return DecisionTable.from_rows([f"a{a}" for a in range(m)], rows, dec)


def random_partition(rng: random.Random, table: DecisionTable, mode: Mode, parties: int) -> tuple[Partition, list[PartyView]]:
    if mode is Mode.HORIZONTAL:
        order = list(range(table.size))
        rng.shuffle(order)
        groups: list[list[int]] = [[] for _ in range(parties)]
        for i in order:
            groups[rng.randrange(parties)].append(i)
        return assign_rows(table, [sorted(g) for g in groups])
    groups = [[] for _ in range(parties)]
    for a in range(len(table.attributes)):
        groups[rng.randrange(parties)].append(a)
    return split_vertical(table, [AttributeSet.of(g) for g in groups])


@dataclass
class FuzzSummary:
    cases: int = 0
    passed: int = 0
    failures: list[dict] = field(default_factory=list)
    messages: int = 0

    def as_dict(self) -> dict:
        return {"cases": self.cases, "passed": self.passed, "failures": self.failures[:10], "messages": self.messages}


def fuzz_campaign(cases: int, seed: int = 0) -> FuzzSummary:
    """Random (table, partition, mode) triples, each verified end to end."""
    rng = random.Random(seed)
    summary = FuzzSummary()
    for case in range(cases):
        table = random_table(rng)
        mode = Mode.HORIZONTAL if case % 2 == 0 else Mode.VERTICAL
        parties = rng.randint(2, 5)
        partition, views = random_partition(rng, table, mode, parties)
        report = verify_run(table, partition, views, seed=rng.getrandbits(32))
        summary.cases += 1
        summary.messages += report.transcript["messages"]
        clean = not report.audit["violations"]
        if report.passed and clean:
            summary.passed += 1
        else:
            summary.failures.append({"case": case, "mode": mode.value, "parties": parties, "mismatch": report.first_mismatch()})
    return summary


def scramble_fingerprints(target: int):
    """Tamper hook: replace every tag in the ``target``-th fingerprint-bearing message.

    Counts FingerprintSet and BlockLabels messages from zero. Replacement tags
    are distinct, so the receiver sees no equalities at all.
    """
    counter = {"n": 0}

    def hook(msg):
        if msg.kind not in (netsim.FINGERPRINT_SET, netsim.BLOCK_LABELS):
            return None
        n = counter["n"]
        counter["n"] += 1
        if n != target:
            return None
        fields = netsim.unpack_fields(msg.payload)
        return netsim.pack_fields(
            (hashlib.sha256(b"tamper%d" % k).digest()[:16] if f else f) for k, f in enumerate(fields)
        )

    return hook
