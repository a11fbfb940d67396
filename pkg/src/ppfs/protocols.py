"""Privacy-preserving QuickReduct over horizontal and vertical partitions.

Both evaluators plug into :func:`ppfs.rough.quick_reduct`. Each subset
evaluation runs as one netsim session; the only values that leave a party
are keyed fingerprints, masked residues, block labels and the announced
candidate degrees.

Horizontal mode: every party computes its local positive region, swaps
conflict fingerprints with every other party, and drops local positives that
share a condition tuple with a remote object of another class. Positive,
invalidated and universe counts are combined by secure sum.

Vertical mode: all parties hold the current reduct's impure blocks as
fingerprint labels. The owner of a candidate attribute intersects those
blocks with its own impure blocks for the attribute; what stays impure is
subtracted from the universe.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence

from . import netsim
from .netsim import BROADCAST, Harness, ProtocolAbort, Recv, Send, Transcript
from .partition import Mode, Partition, PartitionError, PartyView
from .rough import AttributeSet, DependencyDegree, ReductResult, partition_by, quick_reduct
from .smc import count_invalidated, fingerprint, make_conflict_fingerprints, secure_sum


@dataclass
class DistributedGamma:
    subset: AttributeSet
    gamma: DependencyDegree
    universe: int
    # party -> (local positive count, invalidated count, local size) in HP,
    # candidate owner -> (impure object count,) in VP
    local_contributions: dict[int, tuple[int, ...]] = field(default_factory=dict)
    impure_blocks: list[frozenset[str]] | None = None


@dataclass
class ImpureBlockLabels:
    """Per-object block label for ``subset``; ``None`` marks pure-block objects."""

    subset: AttributeSet
    labels: tuple[bytes | None, ...]

    def blocks(self, object_ids: Sequence[str]) -> list[list[int]]:
        groups: dict[bytes, list[int]] = {}
        for i, lab in enumerate(self.labels):
            if lab is not None:
                groups.setdefault(lab, []).append(i)
        return list(groups.values())

    def impure_count(self) -> int:
        return sum(lab is not None for lab in self.labels)

    def encode(self) -> bytes:
        return netsim.pack_fields(lab or b"" for lab in self.labels)

    @classmethod
    def decode(cls, subset: AttributeSet, payload: bytes) -> "ImpureBlockLabels":
        return cls(subset, tuple(f or None for f in netsim.unpack_fields(payload)))


def _candidate_attribute(current: AttributeSet, p: AttributeSet) -> int:
    extra = [a for a in p if a not in current]
    return extra[0] if len(extra) == 1 and current.issubset(p) else -1


def _announce(ctx, announcer: int, attribute: int, gamma: tuple[int, int] | None):
    """Broadcast ``CandidateGamma`` from ``announcer``; everyone returns it."""
    if ctx.party == announcer:
        yield Send(BROADCAST, netsim.CANDIDATE_GAMMA, netsim.pack_ints([attribute % 2**64, *gamma]))
        return gamma
    a, num, den = netsim.unpack_ints((yield Recv(announcer, netsim.CANDIDATE_GAMMA)))
    return num, den


def _selection_engine(ctx, attribute: int):
    if ctx.party == 0:
        yield Send(BROADCAST, netsim.CONTROL, netsim.pack_ints([attribute]))
    else:
        yield Recv(0, netsim.CONTROL)


def _exchange_digest(ctx, digest: bytes, what: str):
    yield Send(BROADCAST, netsim.CONTROL, netsim.pack_fields([digest]))
    for q in ctx.peers:
        (theirs,) = netsim.unpack_fields((yield Recv(q, netsim.CONTROL)))
        if theirs != digest:
            raise ProtocolAbort(f"party {ctx.party}: {what} differs from party {q}")


# -- horizontal ------------------------------------------------------------

def _hp_engine(ctx, view: PartyView, p: AttributeSet, key: bytes, classes, certified: frozenset, attribute: int):
    t = view.local_table
    local_p = view.local_subset(p)
    ec = partition_by(t, local_p)
    positive = ec.pure_objects()
    rows = t.row_index()
    # Objects already globally positive for the parent subset cannot take
    # part in a conflict, so they are neither sent nor checked.
    open_objects = [o for o in t.object_ids if o not in certified]
    tags = make_conflict_fingerprints(t, p, key, objects=open_objects)
    payload = netsim.pack_fields(sorted(tags))
    for q in ctx.peers:
        yield Send(q, netsim.FINGERPRINT_SET, payload)
    remote: set[bytes] = set()
    for q in ctx.peers:
        remote.update(netsim.unpack_fields((yield Recv(q, netsim.FINGERPRINT_SET))))
    to_check = [
        (o, [t.value(rows[o], a) for a in local_p], t.class_of(rows[o]))
        for o in t.object_ids
        if o in positive and o not in certified
    ]
    inv, invalid = count_invalidated(to_check, remote, key, p, classes)
    size, pos, total_inv = yield from secure_sum(ctx, [t.size, len(positive), inv])
    gamma = yield from _announce(ctx, 0, attribute, (pos - total_inv, size))
    return {
        "gamma": gamma,
        "local": (len(positive), inv, t.size),
        "certified": frozenset(positive - invalid),
        "skipped": len(positive & certified),
    }


class HorizontalEvaluator:
    """Subset evaluator for row-partitioned data (two or more parties).

    Each party keeps the set of its objects already known to be globally
    positive for the current reduct; those are skipped in later rounds.
    """

    def __init__(self, views: Sequence[PartyView], harness: Harness, classes: Sequence[str] | None = None):
        if len(views) < 2:
            raise PartitionError("party_count must be >= 2")
        self.views = list(views)
        self.harness = harness
        self.classes = tuple(classes if classes is not None else views[0].local_table.classes)
        self.key = harness.session_key()
        self.current = AttributeSet()
        self.certified = {v.party: frozenset() for v in self.views}
        self._candidates: dict[AttributeSet, dict[int, frozenset]] = {}
        self.history: list[DistributedGamma] = []
        self.cache_hits = 0
        self._check_schema()

    def _check_schema(self):
        def engine(ctx, view):
            t = view.local_table
            schema = repr((t.attributes, t.decision_name, self.classes)).encode()
            yield from _exchange_digest(ctx, hashlib.sha256(schema).digest(), "schema")

        self.harness.run({v.party: engine(self.harness.contexts[v.party], v) for v in self.views})

    def __call__(self, p: AttributeSet) -> DependencyDegree:
        certified = self.certified if self.current.issubset(p) else {v.party: frozenset() for v in self.views}
        attribute = _candidate_attribute(self.current, p)
        out = self.harness.run({
            v.party: _hp_engine(
                self.harness.contexts[v.party], v, p, self.key, self.classes, certified[v.party], attribute
            )
            for v in self.views
        })
        gammas = {o["gamma"] for o in out.values()}
        if len(gammas) != 1:
            raise ProtocolAbort(f"parties disagree on the degree of {list(p)}: {gammas}")
        num, den = gammas.pop()
        self._candidates[p] = {party: o["certified"] for party, o in out.items()}
        self.cache_hits += sum(o["skipped"] for o in out.values())
        result = DistributedGamma(p, DependencyDegree(num, den), den, {q: o["local"] for q, o in out.items()})
        self.history.append(result)
        return result.gamma

    def on_select(self, reduct: AttributeSet) -> None:
        attribute = _candidate_attribute(self.current, reduct)
        self.certified = self._candidates[reduct]
        self.current = reduct
        self._candidates = {}
        self.harness.run({v.party: _selection_engine(self.harness.contexts[v.party], attribute) for v in self.views})


def hp_evaluate(p: AttributeSet, views: Sequence[PartyView], harness: Harness) -> DistributedGamma:
    """One stand-alone horizontal evaluation of ``p``."""
    ev = HorizontalEvaluator(views, harness)
    ev(p)
    return ev.history[-1]


# -- vertical --------------------------------------------------------------

def _root_labels(view: PartyView, key: bytes) -> ImpureBlockLabels:
    t = view.local_table
    if len(set(t.decision)) <= 1:
        return ImpureBlockLabels(AttributeSet(), tuple(None for _ in t.object_ids))
    tag = fingerprint(key, (), (), "root")
    return ImpureBlockLabels(AttributeSet(), tuple(tag for _ in t.object_ids))


def refine_labels(view: PartyView, state: ImpureBlockLabels, attribute: int, key: bytes) -> tuple[ImpureBlockLabels, list[frozenset[str]]]:
    """Intersect the state's impure blocks with the owner's impure blocks of ``attribute``.

    Returns the labels for ``state.subset | {attribute}`` and the surviving
    impure blocks as object-id sets.
    """
    t = view.local_table
    local = view.local_subset(AttributeSet((attribute,)))
    own_impure = partition_by(t, local).impure_blocks()
    rows = t.row_index()
    state_blocks = [frozenset(t.object_ids[i] for i in b) for b in state.blocks(t.object_ids)]
    subset = state.subset.add(attribute)
    labels: list[bytes | None] = [None] * t.size
    kept = []
    for sb in state_blocks:
        for fb in own_impure:
            block = sb & fb
            if len(block) < 2 or len({t.decision[rows[o]] for o in block}) < 2:
                continue
            kept.append(block)
            first = min(rows[o] for o in block)
            tag = fingerprint(key, subset, (state.labels[first].hex(), t.value(first, local.indices[0])), "block")
            for o in block:
                labels[rows[o]] = tag
    return ImpureBlockLabels(subset, tuple(labels)), kept


def _vp_engine(ctx, view: PartyView, owner: int, state: ImpureBlockLabels, attribute: int, key: bytes):
    if ctx.party == owner:
        t = view.local_table
        new, kept = refine_labels(view, state, attribute, key)
        impure = new.impure_count()
        gamma = yield from _announce(ctx, owner, attribute, (t.size - impure, t.size))
        return {"gamma": gamma, "labels": new, "blocks": kept}
    gamma = yield from _announce(ctx, owner, attribute, None)
    return {"gamma": gamma}


def _state_gamma_engine(ctx, view: PartyView, state: ImpureBlockLabels):
    n = view.local_table.size
    gamma = yield from _announce(ctx, 0, -1, (n - state.impure_count(), n))
    return {"gamma": gamma}


def _labels_engine(ctx, owner: int, labels: ImpureBlockLabels | None, subset: AttributeSet):
    if ctx.party == owner:
        yield Send(BROADCAST, netsim.BLOCK_LABELS, labels.encode())
        return labels
    return ImpureBlockLabels.decode(subset, (yield Recv(owner, netsim.BLOCK_LABELS)))


def vp_evaluate(
    p: AttributeSet,
    views: Sequence[PartyView],
    partition: Partition,
    state: ImpureBlockLabels,
    harness: Harness,
    key: bytes,
) -> tuple[DistributedGamma, ImpureBlockLabels | None]:
    """Evaluate ``p = state.subset | {f}`` (or ``p == state.subset``).

    Returns the degree and, for a proper candidate, the owner's labels for
    ``p`` (shared only if the candidate is later selected).
    """
    n = views[0].local_table.size
    if p == state.subset:
        out = harness.run({v.party: _state_gamma_engine(harness.contexts[v.party], v, state) for v in views})
        num, den = out[0]["gamma"]
        return DistributedGamma(p, DependencyDegree(num, den), n), None
    attribute = _candidate_attribute(state.subset, p)
    if attribute < 0:
        raise ValueError(f"{list(p)} is not the state {list(state.subset)} plus one attribute")
    owner = partition.owner_of(attribute)
    out = harness.run({
        v.party: _vp_engine(harness.contexts[v.party], v, owner, state, attribute, key) for v in views
    })
    gammas = {o["gamma"] for o in out.values()}
    if len(gammas) != 1:
        raise ProtocolAbort(f"parties disagree on the degree of {list(p)}")
    num, den = gammas.pop()
    labels = out[owner]["labels"]
    dg = DistributedGamma(
        p, DependencyDegree(num, den), n, {owner: (labels.impure_count(),)}, out[owner]["blocks"]
    )
    return dg, labels


class VerticalEvaluator:
    """Subset evaluator for attribute-partitioned data (two or more parties).

    Every party keeps its own copy of the block labels it received; an
    evaluation uses the copy held by the candidate attribute's owner.
    """

    def __init__(self, partition: Partition, views: Sequence[PartyView], harness: Harness):
        if len(views) < 2:
            raise PartitionError("party_count must be >= 2")
        self.partition = partition
        self.views = sorted(views, key=lambda v: v.party)
        self.harness = harness
        self.key = harness.session_key()
        self._check_alignment()
        self._reset()
        self._candidates: dict[AttributeSet, ImpureBlockLabels] = {}
        self.history: list[DistributedGamma] = []

    @property
    def current(self) -> AttributeSet:
        return self.states[0].subset

    def _reset(self) -> None:
        self.states = {v.party: _root_labels(v, self.key) for v in self.views}

    def _check_alignment(self):
        def engine(ctx, view):
            t = view.local_table
            digest = fingerprint(self.key, (), (*t.object_ids, "|", *(t.class_of(i) for i in range(t.size))), "align")
            yield from _exchange_digest(ctx, digest, "object order or decision column")

        self.harness.run({v.party: engine(self.harness.contexts[v.party], v) for v in self.views})

    def _state_for(self, p: AttributeSet) -> ImpureBlockLabels:
        attribute = _candidate_attribute(self.current, p)
        return self.states[0 if attribute < 0 else self.partition.owner_of(attribute)]

    def _rebuild(self, p: AttributeSet) -> None:
        """Walk the state from the empty set up to ``p`` minus its last attribute."""
        self._reset()
        for a in p.indices[:-1]:
            q = self.current.add(a)
            _, labels = vp_evaluate(q, self.views, self.partition, self._state_for(q), self.harness, self.key)
            self._share(labels)

    def _share(self, labels: ImpureBlockLabels) -> None:
        attribute = _candidate_attribute(self.current, labels.subset)
        owner = self.partition.owner_of(attribute)
        self.states = self.harness.run({
            v.party: _labels_engine(self.harness.contexts[v.party], owner, labels if v.party == owner else None, labels.subset)
            for v in self.views
        })

    def __call__(self, p: AttributeSet) -> DependencyDegree:
        if p != self.current and _candidate_attribute(self.current, p) < 0:
            self._rebuild(p)
        dg, labels = vp_evaluate(p, self.views, self.partition, self._state_for(p), self.harness, self.key)
        if labels is not None:
            self._candidates[p] = labels
        self.history.append(dg)
        return dg.gamma

    def on_select(self, reduct: AttributeSet) -> None:
        attribute = _candidate_attribute(self.current, reduct)
        self._share(self._candidates[reduct])
        self._candidates = {}
        self.harness.run({v.party: _selection_engine(self.harness.contexts[v.party], attribute) for v in self.views})


# -- coordinator -----------------------------------------------------------

@dataclass
class DistributedRun:
    result: ReductResult
    transcript: Transcript
    history: list[DistributedGamma]
    harness: Harness
    mode: Mode

    def gamma_of(self, p: AttributeSet) -> DependencyDegree:
        for h in reversed(self.history):
            if h.subset == p:
                return h.gamma
        raise KeyError(p)


def make_evaluator(partition: Partition, views: Sequence[PartyView], harness: Harness):
    if partition.mode is Mode.HORIZONTAL:
        return HorizontalEvaluator(views, harness, partition.classes)
    return VerticalEvaluator(partition, views, harness)


def distributed_quick_reduct(
    partition: Partition,
    views: Sequence[PartyView],
    seed: int = 0,
    harness: Harness | None = None,
) -> DistributedRun:
    """QuickReduct driven entirely by the distributed evaluator of ``partition.mode``.

    Every party sees each announced candidate degree and applies the same
    lowest-index argmax, so the result is delivered to all parties.
    """
    if partition.party_count < 2:
        raise PartitionError("party_count must be >= 2")
    if harness is None:
        harness = Harness(partition.party_count, seed)
    evaluator = make_evaluator(partition, views, harness)
    inner_select = evaluator.on_select

    class _Tracked:
        def __call__(self, p):
            return evaluator(p)

        def on_select(self, reduct):
            inner_select(reduct)
            harness.round += 1

    harness.round = 1
    result = quick_reduct(partition, _Tracked())
    return DistributedRun(result, harness.transcript, evaluator.history, harness, partition.mode)
