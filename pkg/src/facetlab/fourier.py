"""Fourier coefficients of ``S(t) = log(1 - (1/d) sum_j cos t_j)``.

Expanding the logarithm gives the random-walk series

    S^(q) = - sum_{k>=1} P_k(q) / k,

where ``P_k(q) = N_k(q) / (2d)^k`` is the probability that the simple random
walk on Z^d sits at ``q`` after ``k`` steps.  Every term is non-positive.  The
series is truncated at depth ``K`` and the remainder is controlled by the
local limit bound ``P_k(q) <= 2 (d / (2 pi k))^(d/2)`` summed over the steps
of the right parity (a Hurwitz zeta value).  The returned value is the
midpoint of the resulting interval, so ``err`` is a two-sided bound.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy.special import gammaln, zeta

from .errors import ToleranceUnreachable, UsageError

DEFAULT_TOL = 1e-6
# Depth caps: d = 2 costs O(K) per coefficient, d >= 3 costs O(K^2).
MAX_DEPTH = {2: 50_000_000}
MAX_DEPTH_HIGH = 40_000
_lf_lock = threading.Lock()
_lf_table = np.zeros(1)


def log_factorials(K: int) -> np.ndarray:
    """``log(k!)`` for ``k = 0..K`` (shared, grown on demand, read-only)."""
    global _lf_table
    with _lf_lock:
        if len(_lf_table) <= K:
            size = max(K + 1, 2 * len(_lf_table))
            table = gammaln(np.arange(size, dtype=np.float64) + 1.0)
            table.setflags(write=False)
            _lf_table = table
        return _lf_table


def exact_walk_count(q, k: int) -> int:
    """Number of ``k``-step nearest-neighbour walks from 0 to ``q`` (exact).

    Splits the ``k`` steps among the axes and counts each axis as a 1-d walk:
    ``sum multinomial(k; k_1..k_d) prod_j binom(k_j, (k_j + |q_j|) / 2)``.
    """
    q = [abs(int(c)) for c in q]
    d = len(q)
    if (k - sum(q)) % 2 or k < sum(q):
        return 0

    def rec(j, remaining):
        if j == d - 1:
            kj = remaining
            if kj < q[j] or (kj - q[j]) % 2:
                return 0
            return math.comb(kj, (kj + q[j]) // 2)
        total = 0
        for kj in range(q[j], remaining + 1, 2):
            total += math.comb(remaining, kj) * math.comb(kj, (kj + q[j]) // 2) * rec(j + 1, remaining - kj)
        return total

    return rec(0, k)


def walk_prob_1d(a: int, K: int) -> np.ndarray:
    """``P_k(a)`` for the simple walk on Z, ``k = 0..K``."""
    a = abs(int(a))
    out = np.zeros(K + 1)
    if a > K:
        return out
    lf = log_factorials(K)
    k = np.arange(a, K + 1, 2)
    out[k] = np.exp(lf[k] - lf[(k + a) // 2] - lf[(k - a) // 2] - k * math.log(2.0))
    return out


@nb.njit(cache=True, nogil=True)
def _binomial_mix(A, B, lf, log_w1, log_w2):
    # out[k] = sum_m binom(k, m) w1^m w2^(k-m) A[m] B[k-m], fixed summation order.
    K = A.shape[0] - 1
    out = np.zeros(K + 1)
    for k in range(K + 1):
        s = 0.0
        lk = lf[k]
        for m in range(k + 1):
            a = A[m]
            if a == 0.0:
                continue
            b = B[k - m]
            if b == 0.0:
                continue
            s += math.exp(lk - lf[m] - lf[k - m] + m * log_w1 + (k - m) * log_w2) * a * b
        out[k] = s
    return out


def walk_prob(q, K: int) -> np.ndarray:
    """``P_k(q)`` for ``k = 0..K`` in any dimension.

    In d = 2 the rotated coordinates ``q1 + q2`` and ``q1 - q2`` perform
    independent 1-d walks, so ``P_k(q) = P_k(q1 + q2) P_k(q1 - q2)``.  Higher
    dimensions peel off one axis: the first axis receives ``m`` of the ``k``
    steps with binomial probability ``binom(k, m) (1/d)^m (1 - 1/d)^(k-m)``.
    """
    q = tuple(abs(int(c)) for c in q)
    d = len(q)
    if d == 1:
        return walk_prob_1d(q[0], K)
    if d == 2:
        return walk_prob_1d(q[0] + q[1], K) * walk_prob_1d(q[0] - q[1], K)
    lf = log_factorials(K)
    A = walk_prob_1d(q[0], K)
    B = walk_prob(q[1:], K)
    return _binomial_mix(A, B, np.asarray(lf[: K + 1]), math.log(1.0 / d), math.log((d - 1.0) / d))


def tail_bound(d: int, K: int, parity: int) -> float:
    """Bound on ``sum_{k > K, k = parity mod 2} P_k(q) / k``."""
    s = d / 2.0 + 1.0
    k0 = K + 1 if (K + 1) % 2 == parity % 2 else K + 2
    return 2.0 * (d / (2.0 * math.pi)) ** (d / 2.0) * 2.0 ** (-s) * float(zeta(s, k0 / 2.0))


def series_depth(d: int, tol: float, parity: int) -> int:
    """Smallest depth ``K`` whose tail bound is at most ``2 tol``."""
    cap = MAX_DEPTH.get(d, MAX_DEPTH_HIGH)
    target = 2.0 * tol
    if tail_bound(d, cap, parity) > target:
        raise ToleranceUnreachable(f"tolerance {tol} needs series depth beyond {cap} in d={d}")
    lo, hi = 0, cap
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tail_bound(d, mid, parity) <= target:
            hi = mid
        else:
            lo = mid
    return hi


@nb.njit(cache=True, nogil=True)
def _series_kernel_2d(a, b, start, K, lf):
    log2 = math.log(2.0)
    total = 0.0
    for k in range(start, K + 1, 2):
        logp = (2 * lf[k] - lf[(k + a) // 2] - lf[(k - a) // 2] - lf[(k + b) // 2] - lf[(k - b) // 2]
                - 2 * k * log2)
        total += math.exp(logp) / k
    return total


def _series_sum_2d(q, K: int) -> float:
    a, b = abs(q[0] + q[1]), abs(q[0] - q[1])
    start = max(a, b, 1)
    if start % 2 != a % 2:
        start += 1
    return float(_series_kernel_2d(a, b, start, K, log_factorials(K)))


def fourier_coeff(q, tol: float = DEFAULT_TOL) -> tuple[float, float]:
    """``(value, err)`` for ``S^(q)`` with ``|S^(q) - value| <= err <= tol``."""
    if tol <= 0:
        raise UsageError("tol must be positive")
    q = tuple(sorted((abs(int(c)) for c in q), reverse=True))
    d = len(q)
    if d == 1:
        # log(1 - cos t) = -log 2 - 2 sum_n cos(n t) / n
        return (-math.log(2.0) if q[0] == 0 else -1.0 / q[0]), 0.0
    parity = sum(q) % 2
    K = series_depth(d, tol, parity)
    if d == 2:
        partial = _series_sum_2d(q, K)
    else:
        P = walk_prob(q, K)
        k = np.arange(1, K + 1)
        partial = float(np.sum(P[1:] / k))
    bound = tail_bound(d, K, parity)
    return -(partial + 0.5 * bound), 0.5 * bound


def canonical_site(q) -> tuple[int, ...]:
    return tuple(sorted((abs(int(c)) for c in q), reverse=True))


@dataclass
class FourierTable:
    """Memo of ``q -> (S^(q), err)`` keyed by the symmetry class of ``q``.

    Insertions are serialised; the stored value depends only on the key and
    the tolerance, never on insertion order.
    """

    d: int
    tol: float = DEFAULT_TOL
    entries: dict = field(default_factory=dict)
    series_depth: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def get(self, q) -> tuple[float, float]:
        key = canonical_site(q)
        if len(key) != self.d:
            raise UsageError(f"site {q} has wrong dimension for a d={self.d} table")
        hit = self.entries.get(key)
        if hit is not None:
            return hit
        val = fourier_coeff(key, self.tol)
        with self._lock:
            self.entries.setdefault(key, val)
            self.series_depth = max(self.series_depth, series_depth(self.d, self.tol, sum(key) % 2))
        return val

    def many(self, qs) -> tuple[np.ndarray, np.ndarray]:
        vals = [self.get(q) for q in qs]
        if not vals:
            return np.zeros(0), np.zeros(0)
        v, e = zip(*vals)
        return np.array(v), np.array(e)


_tables: dict[tuple[int, float], FourierTable] = {}
_tables_lock = threading.Lock()


def shared_table(d: int, tol: float = DEFAULT_TOL) -> FourierTable:
    with _tables_lock:
        tab = _tables.get((d, tol))
        if tab is None:
            tab = _tables[(d, tol)] = FourierTable(d, tol)
        return tab
