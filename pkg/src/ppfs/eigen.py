"""Covariance/correlation eigenvalue feature selection over partitioned data.

Moments are exchanged as exact scaled integers. A column whose cells carry
at most ``d`` decimal places is multiplied by ``10**d``, so feature sums and
cross sums are integers and the secure sum / dot product compute them
exactly. Covariances are then formed as exact fractions and rounded once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import netsim
from .netsim import BROADCAST, Harness, Recv, Send
from .partition import Mode, Partition, PartyView
from .rough import DecisionTable
from .smc import ProtocolParameterError, deal_dot_product, from_residue, secure_dot_product, secure_sum, to_residue


class NumericColumnError(TypeError):
    pass


@dataclass
class MomentAggregates:
    """N, per-feature sums and std devs, and the symmetric cross-sum matrix."""

    n: int
    feature_sums: list[Fraction]
    sigmas: list[float]
    cross_sums: list[list[Fraction]]

    def __post_init__(self):
        m = len(self.feature_sums)
        if self.n <= 0:
            raise ProtocolParameterError("moment aggregates need N > 0")
        for i in range(m):
            for j in range(m):
                if self.cross_sums[i][j] != self.cross_sums[j][i]:
                    raise ProtocolParameterError("cross sums are not symmetric")


@dataclass
class EigenSelection:
    delta: float
    corr_eigenvalues: list[float]
    cov_eigenvalues: list[float]
    kept: list[int]

    @property
    def differences(self) -> list[float]:
        return [c - v for c, v in zip(self.corr_eigenvalues, self.cov_eigenvalues)]

    def as_dict(self) -> dict:
        return {
            "delta": self.delta,
            "corr_eigenvalues": self.corr_eigenvalues,
            "cov_eigenvalues": self.cov_eigenvalues,
            "differences": self.differences,
            "kept_ranks": self.kept,
            "pairing": "descending rank",
        }


# -- numeric decoding ------------------------------------------------------

def _decimal_places(d: Decimal) -> int:
    exp = d.normalize().as_tuple().exponent
    return max(0, -exp) if isinstance(exp, int) else 0


def numeric_columns(table: DecisionTable, names: Sequence[str] | None = None) -> list[list[Decimal]]:
    """Column-wise Decimal values; raises naming the first non-numeric column."""
    cols = []
    for a, name in enumerate(names or table.attributes):
        parsed = []
        for sym in table.symbols[a]:
            try:
                d = Decimal(sym)
            except InvalidOperation:
                d = None
            if d is None or not d.is_finite():
                raise NumericColumnError(f"column {name!r} is not numeric (value {sym!r})")
            parsed.append(d)
        cols.append([parsed[row[a]] for row in table.codes])
    return cols


def column_decimals(columns: Sequence[Sequence[Decimal]]) -> list[int]:
    return [max((_decimal_places(v) for v in col), default=0) for col in columns]


def scale_column(col: Sequence[Decimal], places: int) -> list[int]:
    factor = Decimal(10) ** places
    out = []
    for v in col:
        s = v * factor
        if s != s.to_integral_value():
            raise ProtocolParameterError("column has more decimal places than its agreed scale")
        out.append(int(s))
    return out


def _sigma(n: int, fs: Fraction, ss: Fraction) -> float:
    var = ss / n - (fs / n) ** 2
    return math.sqrt(var) if var > 0 else 0.0


def _aggregates(n: int, fs_scaled: Sequence[int], ss_scaled, places: Sequence[int]) -> MomentAggregates:
    m = len(fs_scaled)
    fs = [Fraction(fs_scaled[j], 10 ** places[j]) for j in range(m)]
    ss = [[Fraction(ss_scaled[i][j], 10 ** (places[i] + places[j])) for j in range(m)] for i in range(m)]
    sig = [_sigma(n, fs[j], ss[j][j]) for j in range(m)]
    return MomentAggregates(n, fs, sig, ss)


def local_moments(table: DecisionTable) -> MomentAggregates:
    """Plaintext aggregates of one table (exact)."""
    cols = numeric_columns(table)
    places = column_decimals(cols)
    scaled = [scale_column(c, d) for c, d in zip(cols, places)]
    m = len(scaled)
    ss = [[sum(x * y for x, y in zip(scaled[i], scaled[j])) for j in range(m)] for i in range(m)]
    return _aggregates(table.size, [sum(c) for c in scaled], ss, places)


# -- distributed moments ---------------------------------------------------

def _agree_places(ctx, local: list[int]):
    """Everyone broadcasts its per-column decimal counts; all take the maximum."""
    yield Send(BROADCAST, netsim.CONTROL, netsim.pack_ints(local))
    best = list(local)
    for q in ctx.peers:
        theirs = netsim.unpack_ints((yield Recv(q, netsim.CONTROL)))
        best = [max(a, b) for a, b in zip(best, theirs)]
    return best


def _hp_moments_engine(ctx, view: PartyView, names):
    t = view.local_table
    cols = numeric_columns(t, names) if t.size else [[] for _ in names]
    places = yield from _agree_places(ctx, column_decimals(cols))
    scaled = [scale_column(c, d) for c, d in zip(cols, places)]
    m = len(names)
    pairs = [(i, j) for i in range(m) for j in range(i, m)]
    local = [t.size, *(sum(c) for c in scaled), *(sum(x * y for x, y in zip(scaled[i], scaled[j])) for i, j in pairs)]
    totals = yield from secure_sum(ctx, local)
    n, fs = totals[0], totals[1:1 + m]
    ss = [[0] * m for _ in range(m)]
    for (i, j), v in zip(pairs, totals[1 + m:]):
        ss[i][j] = ss[j][i] = v
    return _aggregates(n, fs, ss, places)


def _vp_published(partition: Partition, party: int) -> list[tuple]:
    """Entries ``party`` broadcasts, in a fixed order every party can derive."""
    own = sorted(partition.assignments[party])
    out = [("fs", j) for j in own]
    out += [("ss", i, j) for k, i in enumerate(own) for j in own[k:]]
    m = len(partition.attributes)
    for i in range(m):
        for j in range(i + 1, m):
            oi, oj = partition.owner_of(i), partition.owner_of(j)
            if oi != oj and oi == party:
                out.append(("ss", i, j))
    return out


def _cross_pairs(partition: Partition) -> list[tuple[int, int]]:
    m = len(partition.attributes)
    return [(i, j) for i in range(m) for j in range(i + 1, m) if partition.owner_of(i) != partition.owner_of(j)]


def _vp_moments_engine(ctx, view: PartyView, partition: Partition, dealt: dict):
    t = view.local_table
    m = len(partition.attributes)
    mine = list(view.attribute_map)
    cols_local = numeric_columns(t, [partition.attributes[g] for g in mine]) if mine else []
    places_local = column_decimals(cols_local)
    places = yield from _agree_places(
        ctx, [places_local[mine.index(g)] if g in mine else 0 for g in range(m)]
    )
    scaled = {g: scale_column(c, places[g]) for g, c in zip(mine, cols_local)}
    known: dict[tuple, int] = {}
    for j in mine:
        known[("fs", j)] = sum(scaled[j])
        for i in mine:
            if i <= j:
                known[("ss", i, j)] = sum(x * y for x, y in zip(scaled[i], scaled[j]))
    for i, j in _cross_pairs(partition):
        oi, oj = partition.owner_of(i), partition.owner_of(j)
        if ctx.party == oi:
            known[("ss", i, j)] = yield from secure_dot_product(ctx, scaled[i], oj, "a", dealt[(i, j)][0])
        elif ctx.party == oj:
            known[("ss", i, j)] = yield from secure_dot_product(ctx, scaled[j], oi, "b", dealt[(i, j)][1])
    mine_pub = _vp_published(partition, ctx.party)
    yield Send(BROADCAST, netsim.AGGREGATES, netsim.pack_ints(to_residue(known[e]) for e in mine_pub))
    for q in ctx.peers:
        vals = netsim.unpack_ints((yield Recv(q, netsim.AGGREGATES)))
        for e, v in zip(_vp_published(partition, q), vals):
            known[e] = from_residue(v)
    fs = [known[("fs", j)] for j in range(m)]
    ss = [[0] * m for _ in range(m)]
    for i in range(m):
        for j in range(i, m):
            ss[i][j] = ss[j][i] = known[("ss", i, j)]
    return _aggregates(t.size, fs, ss, places)


def secure_moments(partition: Partition, views: Sequence[PartyView], harness: Harness) -> dict[int, MomentAggregates]:
    """Aggregates as computed by every party (they are identical)."""
    if partition.mode is Mode.HORIZONTAL:
        names = list(partition.attributes)
        engines = {v.party: _hp_moments_engine(harness.contexts[v.party], v, names) for v in views}
    else:
        n = views[0].local_table.size
        dealt = {pair: deal_dot_product(harness, n) for pair in _cross_pairs(partition)}
        engines = {v.party: _vp_moments_engine(harness.contexts[v.party], v, partition, dealt) for v in views}
    return harness.run(engines)


# -- matrices and eigenvalues ----------------------------------------------

def cov_corr_matrices(m: MomentAggregates) -> tuple[np.ndarray, np.ndarray]:
    """Covariance from moments, and correlation as covariance over sigma products.

    Zero-variance features get correlation 0 off the diagonal and 1 on it.
    """
    if m.n <= 0:
        raise ProtocolParameterError("N must be positive")
    k = len(m.feature_sums)
    n = m.n
    cov = np.zeros((k, k))
    corr = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            exact = m.cross_sums[i][j] / n - m.feature_sums[i] * m.feature_sums[j] / (n * n)
            cov[i, j] = float(exact)
    for i in range(k):
        for j in range(k):
            if i == j:
                corr[i, j] = 1.0
            elif m.sigmas[i] > 0 and m.sigmas[j] > 0:
                corr[i, j] = cov[i, j] / (m.sigmas[i] * m.sigmas[j])
    return cov, corr


def jacobi_eigenvalues(a, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Stops once every off-diagonal entry is below ``tol * ||a||_F``.
    """
    a = np.array(a, dtype=float, copy=True)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max(initial=0))):
        raise ProtocolParameterError("matrix must be square and symmetric")
    a = (a + a.T) / 2
    threshold = tol * np.linalg.norm(a)
    for _ in range(max_sweeps):
        off = np.abs(a - np.diag(np.diag(a)))
        if off.max(initial=0.0) <= threshold:
            return np.diag(a).copy()
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # diagonal via t*apq keeps the trace to rounding of two terms
                app, aqq = a[p, p] - t * apq, a[q, q] + t * apq
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                a[p, :] = a[:, p]
                a[q, :] = a[:, q]
                a[p, p], a[q, q] = app, aqq
                a[p, q] = a[q, p] = 0.0
    raise ArithmeticError("Jacobi iteration did not converge")


def _snap(values, a, tol: float = 1e-12) -> list[float]:
    # eigenvalues below solver resolution are zero; rank-deficient pairs then tie exactly
    floor = tol * np.linalg.norm(a)
    return [0.0 if abs(v) <= floor else float(v) for v in values]


def eigen_select(cov, corr, delta: float) -> EigenSelection:
    """Keep rank ``k`` when the k-th largest correlation eigenvalue exceeds
    the k-th largest covariance eigenvalue by more than ``delta``."""
    cov = np.asarray(cov, dtype=float)
    corr = np.asarray(corr, dtype=float)
    if cov.shape != corr.shape:
        raise ProtocolParameterError("matrices differ in shape")
    ce = sorted(_snap(jacobi_eigenvalues(corr), corr), reverse=True)
    ve = sorted(_snap(jacobi_eigenvalues(cov), cov), reverse=True)
    kept = [k for k, (c, v) in enumerate(zip(ce, ve)) if c - v > delta]
    return EigenSelection(delta, ce, ve, kept)


def plaintext_matrices(table: DecisionTable) -> tuple[np.ndarray, np.ndarray]:
    """Two-pass covariance and correlation of a whole table, in floats."""
    x = np.array([[float(v) for v in col] for col in numeric_columns(table)]).T
    mu = x.mean(axis=0)
    centred = x - mu
    cov = centred.T @ centred / x.shape[0]
    sd = np.sqrt(np.diag(cov))
    corr = np.eye(len(sd))
    for i in range(len(sd)):
        for j in range(len(sd)):
            if i != j and sd[i] > 0 and sd[j] > 0:
                corr[i, j] = cov[i, j] / (sd[i] * sd[j])
    return cov, corr


def plaintext_selection(table: DecisionTable, delta: float) -> EigenSelection:
    cov, corr = plaintext_matrices(table)
    return eigen_select(cov, corr, delta)


@dataclass
class EigenRun:
    aggregates: dict[int, MomentAggregates]
    cov: np.ndarray
    corr: np.ndarray
    selection: EigenSelection
    transcript: netsim.Transcript


def distributed_eigen_selection(partition: Partition, views: Sequence[PartyView], delta: float, seed: int = 0) -> EigenRun:
    """Secure moments, then each party's local eigen selection.

    Every party ends with the same aggregates; the selection is computed
    from party 0's copy and checked against the others.
    """
    harness = Harness(partition.party_count, seed)
    aggs = secure_moments(partition, views, harness)
    cov, corr = cov_corr_matrices(aggs[0])
    for a in aggs.values():
        c2, r2 = cov_corr_matrices(a)
        if not (np.array_equal(c2, cov) and np.array_equal(r2, corr)):
            raise ProtocolParameterError("parties derived different matrices")
    return EigenRun(aggs, cov, corr, eigen_select(cov, corr, delta), harness.transcript)
