"""Simulated semi-honest secure computation primitives.

The sum and dot-product routines are engine fragments: call them with
``yield from`` inside a netsim engine. Arithmetic is in the ring of integers
modulo 2**64; callers keep true magnitudes below 2**63 so results decode
without aliasing.
"""
from __future__ import annotations

import hmac
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

from . import netsim
from .netsim import BROADCAST, PartyContext, Recv, Send

MODULUS = 2**64
HALF = 2**63
TAG_BYTES = 16


class ProtocolParameterError(ValueError):
    pass


def to_residue(v: int) -> int:
    if not -HALF <= v < HALF:
        raise ProtocolParameterError(f"value {v} does not fit in the signed 64-bit range")
    return v % MODULUS


def from_residue(r: int) -> int:
    r %= MODULUS
    return r - MODULUS if r >= HALF else r


# -- secure sum ------------------------------------------------------------

def secure_sum(ctx: PartyContext, values: int | Sequence[int], initiator: int = 0):
    """Ring secure sum over all parties of the session.

    The initiator adds a fresh 64-bit mask to each entry, the running residue
    travels once around the ring picking up every party's value, and the
    initiator strips the mask and broadcasts the total. Returns the total (an
    int, or a list if ``values`` was a sequence).
    """
    n = ctx.n_parties
    if n < 2:
        raise ProtocolParameterError("secure sum needs at least 2 parties")
    scalar = isinstance(values, int)
    vec = [values] if scalar else list(values)
    bound = HALF // n
    for v in vec:
        if abs(v) >= bound:
            raise ProtocolParameterError(f"|{v}| must be below 2**63/{n}")
    me = ctx.party
    nxt, prv = (me + 1) % n, (me - 1) % n
    if me == initiator:
        masks = ctx.random_u64(len(vec))
        running = [(r + to_residue(v)) % MODULUS for r, v in zip(masks, vec)]
        yield Send(nxt, netsim.MASKED_SUM, netsim.pack_ints(running))
        back = netsim.unpack_ints((yield Recv(prv, netsim.MASKED_SUM)))
        totals = [from_residue(b - r) for b, r in zip(back, masks)]
        yield Send(BROADCAST, netsim.SUM_RESULT, netsim.pack_ints(to_residue(t) for t in totals))
    else:
        running = netsim.unpack_ints((yield Recv(prv, netsim.MASKED_SUM)))
        if len(running) != len(vec):
            raise ProtocolParameterError("secure sum vector length differs between parties")
        running = [(r + to_residue(v)) % MODULUS for r, v in zip(running, vec)]
        yield Send(nxt, netsim.MASKED_SUM, netsim.pack_ints(running))
        totals = [from_residue(t) for t in netsim.unpack_ints((yield Recv(initiator, netsim.SUM_RESULT)))]
    return totals[0] if scalar else totals


# -- keyed fingerprints ----------------------------------------------------

def _encode(parts: Iterable) -> bytes:
    out = []
    for part in parts:
        if isinstance(part, int):
            out.append(b"i" + struct.pack(">q", part))
        elif part is None:
            out.append(b"n")
        else:
            data = str(part).encode("utf-8")
            out.append(b"s" + struct.pack(">I", len(data)) + data)
    return b"".join(out)


def fingerprint(key: bytes, subset: Iterable[int], values: Iterable[str], label: str | bytes | None = None) -> bytes:
    """128-bit HMAC-SHA256 tag over (attribute subset, value tuple, label).

    The encoding is length-prefixed, so distinct inputs never share a
    preimage; tags agree exactly when inputs and key agree.
    """
    subset = tuple(subset)
    values = tuple(values)
    if isinstance(label, bytes):
        label = label.hex()
    msg = _encode((len(subset), *subset, len(values), *values, label))
    return hmac.digest(key, msg, "sha256")[:TAG_BYTES]


def make_conflict_fingerprints(view, p, key: bytes, objects: Iterable[str] | None = None) -> set[bytes]:
    """Tags over (p, condition tuple, class) for the fragment's objects.

    ``view`` is a PartyView or a DecisionTable. With ``objects`` only those
    object ids are fingerprinted.
    """
    table = getattr(view, "local_table", view)
    keep = None if objects is None else set(objects)
    tags = set()
    for i, o in enumerate(table.object_ids):
        if keep is not None and o not in keep:
            continue
        tags.add(fingerprint(key, p, [table.value(i, a) for a in p], table.class_of(i)))
    return tags


def count_invalidated(
    local_positive: Iterable[tuple[str, Sequence[str], str]],
    remote_tags: set[bytes],
    key: bytes,
    p,
    classes: Sequence[str],
) -> tuple[int, set[str]]:
    """Count local positive objects that clash with a remote tag.

    ``local_positive`` yields ``(object_id, condition_values, class)``. An
    object is invalidated when some remote party holds the same condition
    tuple under a different class. Each object is counted at most once.
    """
    classes = tuple(classes)
    invalid = set()
    for obj, values, cls in local_positive:
        if cls not in classes:
            raise ProtocolParameterError(f"class {cls!r} is not in the agreed class alphabet")
        for other in classes:
            if other != cls and fingerprint(key, p, values, other) in remote_tags:
                invalid.add(obj)
                break
    return len(invalid), invalid


# -- secure dot product ----------------------------------------------------

@dataclass(frozen=True)
class DotProductRandomness:
    """Correlated randomness from the dealer: ra + rb == <Ra, Rb> mod 2**64."""

    vector: list[int]
    scalar: int


def deal_dot_product(harness, length: int) -> tuple[DotProductRandomness, DotProductRandomness]:
    ra_vec = harness.dealer_u64(length)
    rb_vec = harness.dealer_u64(length)
    ra = harness.dealer_u64(1)[0]
    rb = (sum(x * y for x, y in zip(ra_vec, rb_vec)) - ra) % MODULUS
    return DotProductRandomness(ra_vec, ra), DotProductRandomness(rb_vec, rb)


def secure_dot_product(ctx: PartyContext, vector: Sequence[int], peer: int, role: str, randomness: DotProductRandomness):
    """Two-party scalar product with dealer-supplied correlated randomness.

    Party ``a`` sends its vector masked entry-wise, party ``b`` sends its own
    masked vector plus the masked product aggregate; ``a`` removes the mask
    correction, leaving additive shares of the result which are then swapped.
    Both parties return the exact signed dot product.
    """
    vec = [to_residue(v) for v in vector]
    if len(vec) != len(randomness.vector):
        raise ProtocolParameterError("vector length does not match dealt randomness")
    if role == "a":
        masked = [(x + r) % MODULUS for x, r in zip(vec, randomness.vector)]
        yield Send(peer, netsim.MASKED_VECTOR, netsim.pack_ints(masked))
        b_masked = netsim.unpack_ints((yield Recv(peer, netsim.MASKED_VECTOR)))
        (u,) = netsim.unpack_ints((yield Recv(peer, netsim.MASKED_SUM)))
        if len(b_masked) != len(vec):
            raise ProtocolParameterError("vector lengths differ between parties")
        cross = sum(r * y for r, y in zip(randomness.vector, b_masked))
        share = (u - cross + randomness.scalar) % MODULUS
        yield Send(peer, netsim.MASKED_SUM, netsim.pack_ints([share]))
        (other,) = netsim.unpack_ints((yield Recv(peer, netsim.MASKED_SUM)))
    elif role == "b":
        a_masked = netsim.unpack_ints((yield Recv(peer, netsim.MASKED_VECTOR)))
        if len(a_masked) != len(vec):
            raise ProtocolParameterError("vector lengths differ between parties")
        masked = [(y + r) % MODULUS for y, r in zip(vec, randomness.vector)]
        share = ctx.random_u64()
        u = (sum(x * y for x, y in zip(a_masked, vec)) + randomness.scalar - share) % MODULUS
        yield Send(peer, netsim.MASKED_VECTOR, netsim.pack_ints(masked))
        yield Send(peer, netsim.MASKED_SUM, netsim.pack_ints([u]))
        (other,) = netsim.unpack_ints((yield Recv(peer, netsim.MASKED_SUM)))
        yield Send(peer, netsim.MASKED_SUM, netsim.pack_ints([share]))
    else:
        raise ProtocolParameterError(f"unknown role {role!r}")
    return from_residue(share + other)


def check_dot_bounds(a: Sequence[int], b: Sequence[int]) -> None:
    if len(a) != len(b):
        raise ProtocolParameterError(f"length mismatch: {len(a)} vs {len(b)}")
    if sum(abs(x * y) for x, y in zip(a, b)) >= HALF:
        raise ProtocolParameterError("dot product magnitude reaches 2**63")


def run_secure_sum(values: Sequence[int], seed: int = 0):
    """Stand-alone secure sum session; returns (total, transcript)."""
    if len(values) < 2:
        raise ProtocolParameterError("secure sum needs at least 2 parties")
    transcript, outputs = netsim.run_simulation([lambda ctx, v=v: secure_sum(ctx, v) for v in values], seed)
    totals = set(outputs.values())
    assert len(totals) == 1
    return totals.pop(), transcript


def run_secure_dot_product(a: Sequence[int], b: Sequence[int], seed: int = 0):
    """Stand-alone two-party dot product session; returns (result, transcript)."""
    check_dot_bounds(a, b)
    harness = netsim.Harness(2, seed)
    ra, rb = deal_dot_product(harness, len(a))
    out = harness.run({
        0: secure_dot_product(harness.contexts[0], a, 1, "a", ra),
        1: secure_dot_product(harness.contexts[1], b, 0, "b", rb),
    })
    assert out[0] == out[1]
    return out[0], harness.transcript
