"""Independent evaluations of the half-space Hamiltonian ``H(p)``.

``H(p)`` is the discrete Laplacian at the origin of the least nonnegative
lattice-harmonic function in ``{p.x > 0}`` that grows like ``p.x``.  Four
formulas are provided, and they serve as oracles for each other:

``roots``
    ``H^2 = |p|^2 m prod_{|lam_k| > 1} (-lam_k)`` over the roots of the
    palindromic polynomial ``P = m^-1 lam^n Q(lam)``, with
    ``Q(lam) = sum_k (lam^p_k + lam^-p_k - 2)``.
``integral``
    ``H^2 = |p|^2 exp(mean_t log h(t))`` with
    ``h(t) = sum_k (1 - cos p_k t) / (1 - cos t)``.
``hitting``
    ``H = |p|^2 lim g`` where ``g`` is the 1-d hitting profile of the
    projected walk ``k -> k +- p_j``.
``lattice_sum``
    ``H^2 = 2d |p|^2 exp(sum_{q in Lambda_p} S^(q))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import gamma, zeta

from .errors import (CapacityExceeded, NoConvergence, NonRealProduct, RootPairingFailed, SingularSystem,
                     UsageError)
from .fourier import DEFAULT_TOL, canonical_site, fourier_coeff, shared_table
from .lattice import Slope, diophantine_basis, enumerate_lattice, primitive_vectors

METHODS = ("roots", "integral", "lattice_sum", "hitting", "halfspace_numeric")
FORMULA_METHODS = ("roots", "integral", "hitting", "lattice_sum")
DEFAULT_RADIUS = {1: 0, 2: 60, 3: 30, 4: 12}


def _as_slope(p) -> Slope:
    return p if isinstance(p, Slope) else Slope(tuple(int(c) for c in p))


@dataclass(frozen=True)
class HEstimate:
    """A value of ``H(p)`` with the method that produced it.

    ``p`` is the integer vector the value refers to; it is primitive for the
    formula methods and may be any nonzero vector for ``halfspace_numeric``.
    ``err`` is zero for exact routes, otherwise an error estimate.
    """

    p: tuple
    value: float
    method: str
    err: float = 0.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise UsageError(f"unknown method {self.method!r}")
        if not (self.value > 0 and math.isfinite(self.value)):
            raise UsageError(f"H value must be positive and finite, got {self.value}")
        if self.err < 0:
            raise UsageError("err must be nonnegative")

    def barrier_interval(self) -> tuple[int, int]:
        """``[|p|_1, |p|_1 + nnz(p) |p|_inf]``, which must contain ``H(p)``.

        Follows from ``max(0, p.x) <= u <= max(0, p.x) + |p|_inf`` evaluated
        at the neighbours of the origin.
        """
        p = [abs(c) for c in self.p]
        l1 = sum(p)
        return l1, l1 + sum(1 for c in p if c) * max(p)

    def within_barriers(self, slack: float = 1e-9) -> bool:
        lo, hi = self.barrier_interval()
        return lo - slack - self.err <= self.value <= hi + slack + self.err


# ---------------------------------------------------------------- polynomial


@dataclass(frozen=True)
class CharPoly:
    """The monic palindromic polynomial ``P = m^-1 lam^n Q(lam)``.

    ``int_coeffs`` holds the integer coefficients of ``m P = lam^n Q`` from
    the highest power down; ``coeffs`` are those of ``P`` itself, which are
    rational whenever ``m`` does not divide them.
    """

    p: Slope
    n: int
    m: int
    int_coeffs: tuple

    @property
    def coeffs(self) -> tuple:
        return tuple(Fraction(c, self.m) for c in self.int_coeffs)

    @property
    def degree(self) -> int:
        return 2 * self.n

    def deflated(self) -> tuple:
        """Integer coefficients of ``m P / (lam - 1)^2`` (exact)."""
        c = list(self.int_coeffs)
        for _ in range(2):
            out = [c[0]]
            for a in c[1:]:
                out.append(a + out[-1])
            if out[-1] != 0:
                raise ArithmeticError("lambda = 1 is not a root")
            c = out[:-1]
        return tuple(c)

    def __call__(self, lam):
        return np.polyval(np.array(self.int_coeffs, dtype=float), lam) / self.m


def char_poly(p) -> CharPoly:
    """Characteristic polynomial of the projected walk in direction ``p``.

    Examples
    --------
    >>> char_poly((2, 1)).int_coeffs
    (1, 1, -4, 1, 1)
    """
    p = _as_slope(p)
    n, m = p.n, p.m
    c = [0] * (2 * n + 1)  # index j holds the coefficient of lam^(2n - j)
    for pk in p.coords:
        a = abs(pk)
        c[n - a] += 1
        c[n + a] += 1
        c[n] -= 2
    cp = CharPoly(p, n, m, tuple(c))
    _check_char_poly(cp)
    return cp


def _check_char_poly(cp: CharPoly):
    c = cp.int_coeffs
    assert c == c[::-1], "not palindromic"
    assert c[0] == cp.m, "leading coefficient is not m"
    deg = len(c) - 1
    val = sum(c)
    d1 = sum(a * (deg - j) for j, a in enumerate(c))
    d2 = sum(a * (deg - j) * (deg - j - 1) for j, a in enumerate(c))
    assert val == 0 and d1 == 0 and d2 != 0, "lambda = 1 is not a double root"
    assert Fraction(d2, 2) == cp.p.norm2, "second derivative rule violated"


def h_roots(p, tol: float = 1e-10) -> HEstimate:
    """``H(p)`` from the roots of the characteristic polynomial.

    The double root at 1 is removed by exact synthetic division.  The rest
    come in reciprocal pairs, one of each pair outside the unit circle.

    Raises
    ------
    RootPairingFailed
        If the roots do not split into reciprocal pairs off the unit circle.
    NonRealProduct
        If ``prod(-lam_k)`` has a relative imaginary part above ``tol``.
    """
    p = _as_slope(p)
    cp = char_poly(p)
    if cp.n == 1:
        return HEstimate(p.coords, math.sqrt(p.norm2 * cp.m), "roots", 0.0)
    q = np.array(cp.deflated(), dtype=float)
    roots = np.roots(q)
    dq = np.polyder(q)
    for _ in range(3):
        roots = roots - np.polyval(q, roots) / np.polyval(dq, roots)
    mod = np.abs(roots)
    if np.any(np.abs(mod - 1.0) < 1e-9):
        raise RootPairingFailed(f"root on the unit circle for p={p}")
    big, small = roots[mod > 1], roots[mod < 1]
    if len(big) != cp.n - 1 or len(small) != cp.n - 1:
        raise RootPairingFailed(f"expected {cp.n - 1} roots outside the unit circle, found {len(big)}")
    pair_tol = max(math.sqrt(tol), 1e-6)
    unused = list(small)
    for r in big:
        j = int(np.argmin([abs(r * s - 1.0) for s in unused]))
        if abs(r * unused[j] - 1.0) > pair_tol:
            raise RootPairingFailed(f"root {r} has no reciprocal partner")
        unused.pop(j)
    prod = complex(np.prod(-big))
    if abs(prod.imag) > tol * abs(prod) or prod.real <= 0:
        raise NonRealProduct(f"root product {prod} is not positive real")
    return HEstimate(p.coords, math.sqrt(p.norm2 * cp.m * prod.real), "roots", 0.0)


# ------------------------------------------------------------------ integral


def _log_h(coords, t):
    s2 = np.sin(0.5 * t) ** 2
    num = sum(np.sin(0.5 * pk * t) ** 2 for pk in coords)
    out = np.empty_like(t)
    zero = s2 == 0
    out[~zero] = np.log(num[~zero] / s2[~zero])
    out[zero] = math.log(sum(pk * pk for pk in coords))
    return out


def mean_log_h(p, nodes: int = 16, tol: float = 1e-12, max_nodes: int = 1 << 24) -> tuple[float, float, int]:
    """Periodic trapezoid mean of ``log h`` with node doubling.

    Returns ``(mean, last_change, nodes_used)``.
    """
    coords = _as_slope(p).coords
    if nodes < 16:
        raise UsageError("nodes must be >= 16")
    N = nodes
    total = float(np.sum(_log_h(coords, 2 * np.pi * np.arange(N) / N)))
    mean = total / N
    while True:
        if 2 * N > max_nodes:
            raise NoConvergence(f"trapezoid rule did not settle below {tol} with {N} nodes")
        t = 2 * np.pi * (2 * np.arange(N) + 1) / (2 * N)
        total += float(np.sum(_log_h(coords, t)))
        N *= 2
        new = total / N
        change = abs(new - mean)
        mean = new
        if change < tol:
            return mean, change, N


def h_integral(p, nodes: int = 16, tol: float = 1e-12) -> HEstimate:
    """``H(p)`` from the trapezoid rule applied to the smooth factor ``h(t)``."""
    p = _as_slope(p)
    mean, change, _ = mean_log_h(p, nodes, tol)
    H = p.norm * math.exp(0.5 * mean)
    return HEstimate(p.coords, H, "integral", H * 0.5 * change)


def lattice_exponent_integral(p, tol: float = 1e-12) -> float:
    """``(1/2pi) int log(1 - (1/d) sum_k cos p_k t) dt``, the sum of ``S^`` over ``Lambda_p``."""
    p = _as_slope(p)
    return mean_log_h(p, tol=tol)[0] - math.log(2 * p.d)


# ------------------------------------------------------------------- hitting


def _hitting_limit(coeffs: np.ndarray, n: int, K: int) -> float:
    # Unknowns g(1..K); row k encodes sum_s c_s (g(k+s) + g(k-s) - 2 g(k)) = 0.
    ab = np.zeros((2 * n + 1, K))
    rhs = np.zeros(K)
    diag = -2.0 * coeffs.sum()

    def put(row, col, val):
        ab[n + row - col, col] += val

    for k in range(1, K + 1):
        r = k - 1
        put(r, r, diag)
        for s in range(1, n + 1):
            c = coeffs[s]
            if c == 0:
                continue
            put(r, min(k + s, K) - 1, c)
            j = k - s
            if j > 0:
                put(r, j - 1, c)
            elif j == 0:
                rhs[r] -= c
    try:
        g = solve_banded((n, n), ab, rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystem(str(exc)) from exc
    if not np.all(np.isfinite(g)):
        raise SingularSystem("non-finite hitting profile")
    return float(g[-1])


def h_hitting(p, K: int | None = None, tol: float = 1e-12, max_K: int = 1 << 18) -> HEstimate:
    """``H(p)`` from the hitting profile of the projected 1-d walk.

    Solves the banded recurrence on ``1..K`` with constant extension past
    ``K``; ``err`` is the change when ``K`` is doubled.  With ``K=None`` the
    depth starts at ``max(64, 20 n)`` and doubles until the change is below
    ``tol`` relative to ``g``.
    """
    p = _as_slope(p)
    n = p.n
    coeffs = np.zeros(n + 1)
    for pk in p.coords:
        if pk:
            coeffs[abs(pk)] += 1.0
    adaptive = K is None
    K = max(64, 20 * n) if adaptive else int(K)
    if K < 4 * n:
        raise UsageError(f"K must be at least 4n = {4 * n}")
    gK = _hitting_limit(coeffs, n, K)
    while True:
        g2K = _hitting_limit(coeffs, n, 2 * K)
        change = abs(gK - g2K)
        if not adaptive or change <= tol * abs(g2K):
            break
        if 4 * K > max_K:
            raise NoConvergence(f"hitting profile still moving by {change:.3g} at K={2 * K}")
        K, gK = 2 * K, g2K
    return HEstimate(p.coords, p.norm2 * gK, "hitting", p.norm2 * change)


# --------------------------------------------------------------- lattice sum


@dataclass(frozen=True)
class LatticeSum:
    """Pieces of the truncated exponent ``sum_{q in Lambda_p} S^(q)``.

    ``partial`` sums over ``|q| <= R``; ``coeff_err`` bounds the truncation of
    the individual coefficients; ``tail`` is the estimate added for
    ``|q| > R`` and ``tail_err`` its error bound.  ``exponent`` and
    ``exponent_err`` combine them.
    """

    p: tuple
    R: float
    count: int
    partial: float
    coeff_err: float
    tail_mode: str
    tail: float
    tail_err: float

    @property
    def exponent(self) -> float:
        return self.partial + self.tail

    @property
    def exponent_err(self) -> float:
        return self.coeff_err + self.tail_err


def _sphere_area(r: int) -> float:
    return 2.0 * math.pi ** (r / 2.0) / gamma(r / 2.0)


def _ball_volume(r: int) -> float:
    return math.pi ** (r / 2.0) / gamma(r / 2.0 + 1.0)


def _power_tail(norms: np.ndarray, R: float, R2: float, s: float, rank: int, covol: float) -> float:
    """Estimate of ``sum_{q in L, |q| > R} |q|^-s`` for a rank-``rank`` lattice.

    ``norms`` are the lengths of all lattice points with ``|q| <= R2``.  The
    shell beyond ``R2`` is replaced by its integral, with the lattice-point
    discrepancy at ``R2`` charged at the largest integrand value.
    """
    inner = norms[(norms > R) & (norms <= R2)]
    direct = float(np.sum(inner ** -s))
    beyond = _sphere_area(rank) * R2 ** (rank - s) / ((s - rank) * covol)
    count = np.count_nonzero(norms <= R2)
    disc = abs(count - _ball_volume(rank) * R2 ** rank / covol)
    return direct + beyond, 2.0 * disc * R2 ** -s


def _rank_one_tail(v_norm: float, R: float, s: float) -> float:
    # Exact: 2 sum_{j > R/|v|} (j |v|)^-s.
    j0 = math.floor(R / v_norm) + 1
    return 2.0 * v_norm ** -s * float(zeta(s, j0))


def lattice_sum(p, R: float | None = None, tol: float = DEFAULT_TOL, tail: str = "asymptotic",
                limit: int = 2_000_000) -> LatticeSum:
    """Truncated sum of ``S^`` over the Diophantine lattice of ``p``.

    ``tail="asymptotic"`` adds the far-field term ``-A_d |q|^-d`` with
    ``A_d = Gamma(d/2) pi^-d/2`` for ``|q| > R`` and bounds the rest by
    ``B sum |q|^-(d+2)``, where ``B`` is fitted (with a factor 2) on the
    annulus ``R/2 < |q| <= R``.  ``tail="bound"`` adds nothing and reports
    ``C sum_{|q| > R} (1 + |q|)^-d log(2 + |q|)`` with ``C`` fitted on the
    computed coefficients.  ``tail="none"`` reports the partial sum alone.
    """
    p = _as_slope(p)
    d = p.d
    if tail not in ("asymptotic", "bound", "none"):
        raise UsageError(f"unknown tail mode {tail!r}")
    R = DEFAULT_RADIUS.get(d, 12) if R is None else float(R)
    if R < 0:
        raise UsageError("R must be nonnegative")
    L = diophantine_basis(p)
    table = shared_table(d, tol)
    pts = enumerate_lattice(L, R, limit=limit)
    vals, errs = table.many(map(tuple, pts))
    partial = float(np.sum(vals))
    coeff_err = float(np.sum(errs))
    if L.rank == 0 or tail == "none":
        return LatticeSum(p.coords, R, len(pts), partial, coeff_err, tail, 0.0, 0.0)

    rank = L.rank
    covol = L.covolume
    norms = np.sqrt(np.sum(pts.astype(float) ** 2, axis=1))
    fit = (norms > R / 2) & (norms <= R)
    fit_norms, fit_vals, fit_errs = norms[fit], vals[fit], errs[fit]
    if fit_norms.size == 0:
        nz = norms > 0
        if not nz.any():
            # No nonzero lattice point inside R: fit on the shortest shell.
            shell = enumerate_lattice(L, 2.0 * max(R, _shortest(L)), limit=limit)
            shell = shell[np.any(shell != 0, axis=1)]
            fit_vals, fit_errs = table.many(map(tuple, shell))
            fit_norms = np.sqrt(np.sum(shell.astype(float) ** 2, axis=1))
        else:
            fit_norms, fit_vals, fit_errs = norms[nz], vals[nz], errs[nz]

    a_d = gamma(d / 2.0) * math.pi ** (-d / 2.0)
    if rank == 1:
        v_norm = _shortest(L)

        def tail_sum(s):
            return _rank_one_tail(v_norm, R, s), 0.0
    else:
        R2 = _far_radius(R, rank, covol)
        far = enumerate_lattice(L, R2, limit=limit)
        far_norms = np.sqrt(np.sum(far.astype(float) ** 2, axis=1))

        def tail_sum(s):
            return _power_tail(far_norms, R, R2, s, rank, covol)

    if tail == "asymptotic":
        B = _remainder_constant(fit_norms, pts[fit] if fit.any() else None, d, tol, a_d, fit_vals, fit_errs)
        lead, lead_err = tail_sum(d)
        rem, rem_err = tail_sum(d + 2)
        return LatticeSum(p.coords, R, len(pts), partial, coeff_err, tail,
                          -a_d * lead, a_d * lead_err + B * (rem + rem_err))

    C = float(np.max((np.abs(fit_vals) + fit_errs) * (1 + fit_norms) ** d / np.log(2 + fit_norms)))
    bound = C * _decay_tail(L, R, d, limit)
    return LatticeSum(p.coords, R, len(pts), partial, coeff_err, tail, 0.0, bound)


def _remainder_constant(norms, sites, d, tol, a_d, vals, errs, classes: int = 8) -> float:
    """Twice the largest ``|S^(q) + A_d |q|^-d| |q|^(d+2)`` over the fit points.

    The per-coefficient error is multiplied by ``|q|^(d+2)`` here, so the
    largest few symmetry classes are recomputed at a tighter tolerance.
    """
    if sites is not None and len(sites):
        keys = sorted({canonical_site(q) for q in sites}, key=lambda k: (-sum(c * c for c in k), k))[:classes]
        fit_tol = tol / (10.0 if d == 2 else 3.0)
        table = shared_table(d, fit_tol)
        vals, errs = table.many(keys)
        norms = np.sqrt(np.array([sum(c * c for c in k) for k in keys], dtype=float))
    return 2.0 * float(np.max((np.abs(vals + a_d * norms ** -d) + errs) * norms ** (d + 2)))


def _shortest(L) -> float:
    return float(min(np.linalg.norm(np.array(b, dtype=float)) for b in L.basis))


def _far_radius(R: float, rank: int, covol: float, budget: float = 1.5e6) -> float:
    cap = (budget * covol / _ball_volume(rank)) ** (1.0 / rank)
    return max(2.0 * R, min(10.0 * R, cap))


def _decay_tail(L, R: float, d: int, limit: int) -> float:
    """``sum_{q in L, |q| > R} (1 + |q|)^-d log(2 + |q|)`` (rigorous upper estimate)."""
    rank, covol = L.rank, L.covolume
    R2 = _far_radius(R, rank, covol)
    far = enumerate_lattice(L, R2, limit=limit)
    r = np.sqrt(np.sum(far.astype(float) ** 2, axis=1))
    r = r[r > R]
    direct = float(np.sum((1 + r) ** -d * np.log(2 + r)))
    # (1 + x)^-d log(2 + x) <= x^-d log(2 + x); integrate rho^(rank-1) times that past R2.
    from scipy.integrate import quad
    area = _sphere_area(rank) / covol
    beyond = area * quad(lambda x: x ** (rank - 1 - d) * math.log(2 + x), R2, np.inf, limit=200)[0]
    count = np.count_nonzero(np.sqrt(np.sum(far.astype(float) ** 2, axis=1)) <= R2)
    disc = abs(count - _ball_volume(rank) * R2 ** rank / covol)
    return direct + beyond + 2.0 * disc * R2 ** -d * math.log(2 + R2)


def h_lattice_sum(p, R: float | None = None, tol: float = DEFAULT_TOL, tail: str = "asymptotic") -> HEstimate:
    """``H(p)`` from the Fourier lattice sum, ``H^2 = 2d |p|^2 exp(sum S^)``.

    The exponent error ``E`` becomes ``H (exp(E/2) - 1)``.
    """
    p = _as_slope(p)
    ls = lattice_sum(p, R, tol, tail)
    H = math.sqrt(2 * p.d * p.norm2 * math.exp(ls.exponent))
    return HEstimate(p.coords, H, "lattice_sum", H * math.expm1(0.5 * ls.exponent_err))


# -------------------------------------------------------------------- others


def h_dual(p, base: HEstimate) -> float:
    """The dual Hamiltonian ``2d |p|^2 / H(p)``."""
    p = _as_slope(p)
    if tuple(base.p) != p.coords:
        raise UsageError(f"estimate is for {base.p}, not {p.coords}")
    return 2 * p.d * p.norm2 / base.value


def estimate(p, method: str = "roots", **kwargs) -> HEstimate:
    """Dispatch to one of the formula methods by name."""
    funcs = {"roots": h_roots, "integral": h_integral, "hitting": h_hitting, "lattice_sum": h_lattice_sum}
    if method not in funcs:
        raise UsageError(f"unknown method {method!r}; choose from {sorted(funcs)}")
    return funcs[method](p, **kwargs)


@lru_cache(maxsize=None)
def _generic(d: int, tol: float) -> tuple[float, float]:
    s0, err = fourier_coeff((0,) * d, tol)
    c = math.sqrt(2 * d * math.exp(s0))
    return c, c * math.expm1(0.5 * err)


def generic_constant(d: int, tol: float = DEFAULT_TOL, with_err: bool = False):
    """``sqrt(2d exp(S^(0)))``, the value of ``H`` on almost every unit direction.

    Examples
    --------
    >>> round(generic_constant(2), 5)
    1.79162
    """
    if d < 2:
        raise UsageError("generic constant is defined for d >= 2")
    c, err = _generic(int(d), float(tol))
    return (c, err) if with_err else c


@dataclass(frozen=True)
class LevelSetSamples:
    """Radial boundary points of ``{H <= 1}`` (black) and ``{Hbar >= 1}`` (gray)."""

    slopes: np.ndarray
    h_values: np.ndarray
    black: np.ndarray
    gray: np.ndarray
    generic_black_radius: float
    generic_gray_radius: float


def level_set_boundary(max_coord: int, d: int = 2, method: str = "roots") -> LevelSetSamples:
    """Sample both level sets along every primitive direction with ``|p|_inf <= max_coord``.

    Along ``p`` the boundary of ``{H <= 1}`` sits at ``p / H(p)`` and that of
    ``{Hbar >= 1}`` at ``p H(p) / (2d |p|^2)``.
    """
    if d != 2:
        raise UsageError("level sets are sampled in d = 2 only")
    if max_coord < 1:
        raise UsageError("max_coord must be >= 1")
    slopes = primitive_vectors(d, max_coord)
    cache: dict = {}
    hv = np.empty(len(slopes))
    for i, v in enumerate(slopes):
        key = v.canonical()
        if key not in cache:
            cache[key] = estimate(key, method).value
        hv[i] = cache[key]
    P = np.array([v.coords for v in slopes], dtype=float)
    n2 = np.sum(P * P, axis=1)
    g = generic_constant(d)
    return LevelSetSamples(P.astype(np.int64), hv, P / hv[:, None], P * (hv / (2 * d * n2))[:, None], 1.0 / g, g / (2 * d))


def canonical_slopes(d: int, max_coord: int) -> list[Slope]:
    """Orbit representatives ``p_1 >= ... >= p_d >= 0`` in lexicographic order."""
    return primitive_vectors(d, max_coord, canonical=True)


__all__ = [
    "CapacityExceeded", "CharPoly", "HEstimate", "LatticeSum", "LevelSetSamples", "canonical_slopes",
    "char_poly", "estimate", "fourier_coeff", "generic_constant", "h_dual", "h_hitting", "h_integral",
    "h_lattice_sum", "h_roots", "lattice_exponent_integral", "lattice_sum", "level_set_boundary",
]
