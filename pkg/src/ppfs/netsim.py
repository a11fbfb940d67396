"""Deterministic in-memory message passing between party engines.

An engine is a generator. It yields :class:`Send` to emit a message (never
blocks) and :class:`Recv` to wait for the next message from one peer; the
value sent back into the generator is the received payload. Whatever the
generator returns is that party's output.

Engines are advanced round-robin in party order, each one until it blocks, so
a given set of engines, inputs and seed always yields the same transcript.
"""
from __future__ import annotations

import base64
import hashlib
import json
import struct
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Any, Callable, Generator, Iterable, Mapping

import numpy as np

BROADCAST = -1

# message kinds
MASKED_SUM = "MaskedSum"
SUM_RESULT = "SumResult"
MASKED_VECTOR = "MaskedVector"
FINGERPRINT_SET = "FingerprintSet"
BLOCK_LABELS = "BlockLabels"
CANDIDATE_GAMMA = "CandidateGamma"
AGGREGATES = "Aggregates"
CONTROL = "Control"


class SimulationError(RuntimeError):
    pass


class DeadlockError(SimulationError):
    def __init__(self, blocked: Mapping[int, "Recv"]):
        self.blocked = dict(blocked)
        detail = ", ".join(f"party {p} waiting on {r.source} for {r.kind}" for p, r in sorted(blocked.items()))
        super().__init__(f"deadlock: {detail}")


class ProtocolViolation(SimulationError):
    def __init__(self, message_index: int, expected: str, got: str):
        self.message_index = message_index
        super().__init__(f"message #{message_index}: expected {expected}, got {got}")


class ProtocolAbort(SimulationError):
    """Raised by an engine that detects inconsistent inputs (schema, alignment)."""


@dataclass(frozen=True)
class Send:
    to: int
    kind: str
    payload: bytes


@dataclass(frozen=True)
class Recv:
    source: int
    kind: str


Engine = Generator[Any, Any, Any]


@dataclass(frozen=True)
class ProtocolMessage:
    index: int
    round: int
    sender: int
    to: int
    kind: str
    payload: bytes

    @property
    def size(self) -> int:
        return len(self.payload)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.payload).hexdigest()[:32]

    def record(self, full: bool = False) -> dict:
        rec = {
            "round": self.round,
            "from": self.sender,
            "to": "*" if self.to == BROADCAST else self.to,
            "kind": self.kind,
            "size": self.size,
            "digest": self.digest,
        }
        if full:
            rec["payload"] = base64.b64encode(self.payload).decode("ascii")
        return rec


@dataclass
class Transcript:
    """Append-only message log with per-kind counters."""

    messages: list[ProtocolMessage] = field(default_factory=list)
    counts: Counter = field(default_factory=Counter)
    bytes: Counter = field(default_factory=Counter)

    def append(self, msg: ProtocolMessage) -> None:
        self.messages.append(msg)
        self.counts[msg.kind] += 1
        self.bytes[msg.kind] += msg.size

    def __len__(self):
        return len(self.messages)

    def __iter__(self):
        return iter(self.messages)

    def since(self, start: int) -> list[ProtocolMessage]:
        return self.messages[start:]

    def per_party(self) -> dict[int, dict[str, int]]:
        out: dict[int, dict[str, int]] = {}
        for m in self.messages:
            s = out.setdefault(m.sender, {"messages": 0, "bytes": 0})
            s["messages"] += 1
            s["bytes"] += m.size
        return dict(sorted(out.items()))

    def totals(self) -> dict:
        return {
            "messages": len(self.messages),
            "bytes": sum(m.size for m in self.messages),
            "by_kind": {k: {"messages": self.counts[k], "bytes": self.bytes[k]} for k in sorted(self.counts)},
        }

    def to_ndjson(self, full: bool = False) -> str:
        return "".join(json.dumps(m.record(full), sort_keys=True) + "\n" for m in self.messages)


class PartyContext:
    """What an engine may see of the harness: its id, peers, RNG and round."""

    def __init__(self, party: int, n_parties: int, rng: np.random.Generator, harness: "Harness"):
        self.party = party
        self.n_parties = n_parties
        self.rng = rng
        self._harness = harness

    @property
    def round(self) -> int:
        return self._harness.round

    @property
    def peers(self) -> list[int]:
        return [q for q in range(self.n_parties) if q != self.party]

    def random_u64(self, size: int | None = None):
        if size is None:
            return int(self.rng.integers(0, 2**64, dtype=np.uint64))
        return [int(v) for v in self.rng.integers(0, 2**64, size=size, dtype=np.uint64)]


class Harness:
    """Reliable ordered channels, a shared transcript and seeded randomness.

    The harness also plays the trusted dealer of the simulation: it hands out
    session keys and correlated randomness. Everything it issues is remembered
    in ``issued_secrets`` so audits can check none of it reached the wire.
    """

    def __init__(self, n_parties: int, seed: int = 0):
        if n_parties < 1:
            raise ValueError("need at least one party")
        self.n_parties = n_parties
        self.seed = seed
        seeds = np.random.SeedSequence(seed).spawn(n_parties + 1)
        self._dealer = np.random.default_rng(seeds[0])
        self.contexts = [PartyContext(p, n_parties, np.random.default_rng(s), self) for p, s in enumerate(seeds[1:])]
        self.transcript = Transcript()
        self.round = 0
        self.issued_secrets: list[bytes] = []
        self.tamper: Callable[[ProtocolMessage], bytes | None] | None = None

    def session_key(self) -> bytes:
        key = self._dealer.bytes(16)
        self.issued_secrets.append(key)
        return key

    def dealer_u64(self, size: int) -> list[int]:
        return [int(v) for v in self._dealer.integers(0, 2**64, size=size, dtype=np.uint64)]

    def run(self, engines: Mapping[int, Engine]) -> dict[int, Any]:
        """Drive ``engines`` (party id -> generator) to completion."""
        queues: dict[tuple[int, int], deque] = {}
        waiting: dict[int, Recv] = {}
        pending: dict[int, Any] = {p: None for p in engines}
        outputs: dict[int, Any] = {}
        active = dict(sorted(engines.items()))

        def deliver(sender: int, send: Send) -> None:
            targets = [q for q in range(self.n_parties) if q != sender] if send.to == BROADCAST else [send.to]
            msg = ProtocolMessage(len(self.transcript), self.round, sender, send.to, send.kind, bytes(send.payload))
            if self.tamper is not None:
                altered = self.tamper(msg)
                if altered is not None:
                    msg = ProtocolMessage(msg.index, msg.round, msg.sender, msg.to, msg.kind, altered)
            self.transcript.append(msg)
            for q in targets:
                if not 0 <= q < self.n_parties:
                    raise SimulationError(f"party {sender} sent to unknown party {q}")
                queues.setdefault((sender, q), deque()).append(msg)

        while active:
            progressed = False
            for party in list(active):
                gen = active[party]
                while True:
                    want = waiting.get(party)
                    if want is not None:
                        q = queues.get((want.source, party))
                        if not q:
                            break
                        msg = q.popleft()
                        if msg.kind != want.kind:
                            raise ProtocolViolation(msg.index, want.kind, msg.kind)
                        del waiting[party]
                        pending[party] = msg.payload
                    try:
                        op = gen.send(pending[party])
                    except StopIteration as stop:
                        outputs[party] = stop.value
                        del active[party]
                        progressed = True
                        break
                    pending[party] = None
                    progressed = True
                    if isinstance(op, Send):
                        deliver(party, op)
                    elif isinstance(op, Recv):
                        waiting[party] = op
                    else:
                        raise SimulationError(f"party {party} yielded {op!r}")
            if active and not progressed:
                raise DeadlockError({p: waiting[p] for p in active if p in waiting})
        return outputs


def run_simulation(
    parties: Iterable[Callable[[PartyContext], Engine]], seed: int = 0
) -> tuple[Transcript, dict[int, Any]]:
    """Run one session where ``parties[i]`` builds party i's engine from its context."""
    factories = list(parties)
    harness = Harness(len(factories), seed)
    outputs = harness.run({i: f(harness.contexts[i]) for i, f in enumerate(factories)})
    return harness.transcript, outputs


# -- payload framing -------------------------------------------------------

def pack_fields(fields: Iterable[bytes]) -> bytes:
    return b"".join(struct.pack(">I", len(f)) + f for f in fields)


def unpack_fields(payload: bytes) -> list[bytes]:
    out, pos = [], 0
    while pos < len(payload):
        if pos + 4 > len(payload):
            raise ValueError("truncated frame header")
        (n,) = struct.unpack_from(">I", payload, pos)
        pos += 4
        if pos + n > len(payload):
            raise ValueError("truncated frame body")
        out.append(payload[pos:pos + n])
        pos += n
    return out


def pack_ints(values: Iterable[int]) -> bytes:
    return pack_fields(int(v).to_bytes(8, "big", signed=False) for v in values)


def unpack_ints(payload: bytes) -> list[int]:
    return [int.from_bytes(f, "big") for f in unpack_fields(payload)]


def pack_json(obj) -> bytes:
    return pack_fields([json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()])


def unpack_json(payload: bytes):
    (body,) = unpack_fields(payload)
    return json.loads(body)


# -- leakage audit ---------------------------------------------------------

@dataclass
class Violation:
    message_index: int
    kind: str
    pattern: bytes

    def as_dict(self) -> dict:
        return {"message": self.message_index, "kind": self.kind, "pattern": self.pattern.hex()}


@dataclass
class AuditReport:
    scanned: int
    patterns: int
    violations: list[Violation]

    @property
    def clean(self) -> bool:
        return not self.violations

    def as_dict(self) -> dict:
        return {
            "scanned_messages": self.scanned,
            "patterns": self.patterns,
            "violations": [v.as_dict() for v in self.violations],
        }


def audit_transcript(
    transcript: Transcript | Iterable[ProtocolMessage],
    forbidden: Iterable[bytes | str],
    min_substring: int = 4,
) -> AuditReport:
    """Scan payloads for forbidden plaintext.

    A message leaks a pattern if one of its framed fields equals the pattern,
    or if the pattern is at least ``min_substring`` bytes long and occurs
    anywhere in the payload. Shorter patterns are matched per field only,
    since a one- or two-byte string turns up in random masks by chance.
    """
    patterns = sorted({p.encode() if isinstance(p, str) else bytes(p) for p in forbidden})
    patterns = [p for p in patterns if p]
    violations = []
    messages = list(transcript)
    for msg in messages:
        try:
            fields = set(unpack_fields(msg.payload))
        except ValueError:
            fields = {msg.payload}
        for pat in patterns:
            if pat in fields or (len(pat) >= min_substring and pat in msg.payload):
                violations.append(Violation(msg.index, msg.kind, pat))
    return AuditReport(len(messages), len(patterns), violations)
