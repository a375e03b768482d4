"""Least supersolutions of the lattice free boundary problem.

For wetted set ``W`` and height ``h`` the least supersolution is the smallest
``u >= h 1_W`` with ``lap u <= 1_{u=0}`` off ``W``.  Two solvers are given:
the synchronous sandpile flow (slow, monotone, used as the oracle) and an
active-set method built on red-black SOR (fast).  The rest of the module
evaluates the discrete energy, the first-variation conditions, half-space
profiles and facet measurements.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial.distance import pdist

from . import _kernels
from .errors import (BoxTooSmall, EmptySupport, IrrationalZeta, IterationCap, NoConvergence,
                     NonMonotoneActiveSet, NonOrthogonal, UsageError, ZeroVector)
from .hamiltonian import HEstimate
from .lattice import (LatticeBox, ScalarField, SiteSet, Slope, boundary_masks,
                      neighbour_sum_array)

DEFAULT_OMEGA = 1.8


# ------------------------------------------------------------------ problems


def lattice_ball(radius: float, d: int) -> SiteSet:
    """Sites with Euclidean norm at most ``radius``."""
    if radius < 0:
        raise UsageError("radius must be nonnegative")
    r = int(math.floor(radius))
    axes = np.arange(-r, r + 1)
    grid = np.stack(np.meshgrid(*([axes] * d), indexing="ij"), axis=-1).reshape(-1, d)
    keep = np.sum(grid * grid, axis=1) <= radius * radius + 1e-9
    return SiteSet(grid[keep], d=d)


def lattice_polytope(A, b, scale: float = 1.0) -> SiteSet:
    """Sites with ``A x <= scale * b`` (a bounded polytope)."""
    from scipy.optimize import linprog

    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float) * scale
    d = A.shape[1]
    lo, hi = [], []
    for k in range(d):
        c = np.zeros(d)
        c[k] = 1.0
        bounds = [(None, None)] * d
        r_lo = linprog(c, A_ub=A, b_ub=b, bounds=bounds)
        r_hi = linprog(-c, A_ub=A, b_ub=b, bounds=bounds)
        if r_lo.status != 0 or r_hi.status != 0:
            raise UsageError("polytope is empty or unbounded")
        lo.append(int(math.ceil(r_lo.fun - 1e-9)))
        hi.append(int(math.floor(-r_hi.fun + 1e-9)))
    axes = [np.arange(a, z + 1) for a, z in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    keep = np.all(grid @ A.T <= b + 1e-9, axis=1)
    return SiteSet(grid[keep], d=d)


def default_box(wetted: SiteSet, h: float, margin: int = 2) -> LatticeBox:
    """Box guaranteed to contain the support plus its outer boundary.

    Comparison with the one-dimensional tent ``max(0, h + a - x_k)`` shows
    the support lies within distance ``h`` of the bounding box of ``W``.
    """
    ext = int(math.ceil(h)) + margin
    arr = wetted.array
    return LatticeBox(tuple(int(c) - ext for c in arr.min(axis=0)), tuple(int(c) + ext for c in arr.max(axis=0)))


@dataclass
class Problem:
    """Wetted set, boundary height and working box."""

    wetted: SiteSet
    h: float
    box: LatticeBox | None = None

    def __post_init__(self):
        if len(self.wetted) == 0:
            raise UsageError("wetted set must be nonempty")
        if not (self.h >= 0 and math.isfinite(self.h)):
            raise UsageError("h must be finite and nonnegative")
        if self.box is None:
            self.box = default_box(self.wetted, self.h)
        if self.box.d != self.wetted.d:
            raise UsageError("box and wetted set differ in dimension")
        arr = self.wetted.array
        if np.any(arr.min(axis=0) - np.array(self.box.lo) < 2) or np.any(np.array(self.box.hi) - arr.max(axis=0) < 2):
            raise UsageError("wetted set must sit at least 2 sites inside the box")

    @property
    def d(self) -> int:
        return self.wetted.d

    @classmethod
    def ball(cls, radius: float, h: float, d: int, box: LatticeBox | None = None) -> "Problem":
        return cls(lattice_ball(radius, d), h, box)

    def wetted_mask(self) -> np.ndarray:
        return self.wetted.to_mask(self.box)

    def with_box(self, box: LatticeBox) -> "Problem":
        return Problem(self.wetted, self.h, box)


class _Grid:
    """Flat indexing into a box padded by one layer of zeros."""

    def __init__(self, box: LatticeBox):
        self.box = box
        self.pshape = tuple(s + 2 for s in box.shape)
        strides = [1]
        for s in reversed(self.pshape[1:]):
            strides.append(strides[-1] * s)
        self.strides = np.array(strides[::-1], dtype=np.int64)
        self.core = tuple(slice(1, -1) for _ in box.shape)
        self.flat = np.arange(math.prod(self.pshape), dtype=np.int64).reshape(self.pshape)[self.core]
        self.parity = sum(c for c in box.coordinates()) % 2 == 0

    def pad(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros(self.pshape)
        out[self.core] = values
        return out.ravel()

    def unpad(self, flat: np.ndarray) -> np.ndarray:
        return flat.reshape(self.pshape)[self.core].copy()

    def laplacian(self, flat: np.ndarray) -> np.ndarray:
        arr = flat.reshape(self.pshape)
        return neighbour_sum_array(arr) - 2 * len(self.pshape) * arr[self.core]


# ------------------------------------------------------------------- reports


@dataclass(frozen=True)
class Verdicts:
    """Largest violation of each first-variation condition.

    ``harmonic``: ``|lap u|`` on the support off ``W``.  ``outer``:
    ``max(0, lap u - 1)`` on the outer boundary off ``W``.  ``inner``:
    ``max(0, 1/(2d) - u)`` on the inner boundary off ``W``.  ``wetted``:
    ``|u - h|`` on ``W``.  ``nonneg``: ``max(0, -u)``.  ``frame``: whether the
    support keeps off the box frame.
    """

    harmonic: float
    outer: float
    inner: float
    wetted: float
    nonneg: float
    frame_clear: bool
    tol: float

    @property
    def passed(self) -> bool:
        return (self.harmonic <= self.tol and self.outer <= self.tol and self.inner <= self.tol
                and self.wetted == 0.0 and self.nonneg == 0.0 and self.frame_clear)

    def as_dict(self) -> dict:
        return {"harmonic": self.harmonic, "outer": self.outer, "inner": self.inner, "wetted": self.wetted,
                "nonneg": self.nonneg, "frame_clear": self.frame_clear, "tol": self.tol, "passed": self.passed}


@dataclass
class FlowState:
    """One checkpoint of the sandpile flow."""

    v: ScalarField
    iteration: int
    max_update: float
    residual: float


@dataclass
class SolveReport:
    u: ScalarField
    support: SiteSet
    method: str
    iterations: int
    residual_harmonic: float
    residual_boundary: float
    validators: Verdicts
    h: float = 0.0
    outer_iterations: int = 0
    flow_monotone: bool | None = None
    checkpoints: int = 0
    elapsed: float = 0.0
    extra: dict = field(default_factory=dict)


def first_variation(u: np.ndarray, wet: np.ndarray, h: float, tol: float) -> Verdicts:
    """Evaluate the first-variation conditions for a box array ``u`` (zero outside)."""
    d = u.ndim
    lap = neighbour_sum_array(np.pad(u, 1)) - 2 * d * u
    supp = u > 0
    outer, inner = boundary_masks(supp)
    off = ~wet

    def vmax(a):
        return float(a.max()) if a.size else 0.0

    frame = np.zeros_like(supp)
    for ax in range(d):
        sl = [slice(None)] * d
        sl[ax] = 0
        frame[tuple(sl)] = True
        sl[ax] = -1
        frame[tuple(sl)] = True
    return Verdicts(
        harmonic=vmax(np.abs(lap[supp & off])),
        outer=vmax(np.maximum(0.0, lap[outer & off] - 1.0)),
        inner=vmax(np.maximum(0.0, 1.0 / (2 * d) - u[inner & off])),
        wetted=vmax(np.abs(u[wet] - h)),
        nonneg=vmax(np.maximum(0.0, -u)),
        frame_clear=not bool((supp & frame).any()),
        tol=tol,
    )


def check_first_variation(report: SolveReport, prob: Problem, tol: float) -> Verdicts:
    """Recompute every first-variation condition from ``report.u``."""
    return first_variation(report.u.values, prob.wetted.to_mask(report.u.box), prob.h, tol)


def _report(u: np.ndarray, prob: Problem, method: str, iterations: int, eps: float, **kw) -> SolveReport:
    wet = prob.wetted_mask()
    verdicts = first_variation(u, wet, prob.h, 10 * eps)
    field_ = ScalarField(prob.box, u)
    supp = u > 0
    return SolveReport(field_, SiteSet.from_mask(prob.box, supp), method, iterations,
                       verdicts.harmonic, verdicts.outer, verdicts, h=prob.h, **kw)


def _default_eps(h: float) -> float:
    return 1e-9 * max(h, 1.0)


# -------------------------------------------------------------------- solvers


def sandpile_flow(prob: Problem, eps: float | None = None, max_iter: int = 50_000_000,
                  checkpoint_every: int = 1000, keep_checkpoints: bool = False) -> SolveReport:
    """Least supersolution by the synchronous sandpile flow.

    Iterates ``v += max(0, lap v - 1_{v=0}) / (2d)`` from ``v = h 1_W`` with
    ``v = h`` kept on ``W``, until the residual is at most ``eps``.
    Monotonicity ``v_k <= v_{k+1}`` is checked at every checkpoint.

    Raises
    ------
    BoxTooSmall
        If the positive set reaches the box frame.
    IterationCap
        If ``max_iter`` sweeps do not reach ``eps``.
    """
    eps = _default_eps(prob.h) if eps is None else eps
    if eps <= 0:
        raise UsageError("eps must be positive")
    t0 = time.perf_counter()
    grid = _Grid(prob.box)
    wet = prob.wetted_mask()
    sites = grid.flat.ravel()
    wet_flat = wet.ravel()
    v = grid.pad(np.where(wet, float(prob.h), 0.0))
    out = v.copy()
    frame_sites = grid.flat[prob.box.frame_mask()]
    last = v.copy()
    monotone = True
    states = []
    it = 0
    while True:
        res = _kernels.flow_sweep(v, out, sites, wet_flat, grid.strides, float(prob.h))
        if res <= eps:
            break
        v, out = out, v
        it += 1
        if it % checkpoint_every == 0:
            monotone &= bool(np.all(v >= last))
            if keep_checkpoints:
                states.append(FlowState(ScalarField(prob.box, grid.unpad(v)), it, float(np.max(v - last)), res))
            last = v.copy()
            if np.any(v[frame_sites] > 0):
                raise BoxTooSmall("flow reached the box frame")
        if it >= max_iter:
            raise IterationCap(f"flow residual {res:.3g} above eps={eps:.3g} after {it} sweeps")
    monotone &= bool(np.all(v >= last))
    if np.any(v[frame_sites] > 0):
        raise BoxTooSmall("flow reached the box frame")
    rep = _report(grid.unpad(v), prob, "flow", it, eps, flow_monotone=monotone,
                  checkpoints=it // checkpoint_every + 1, elapsed=time.perf_counter() - t0)
    if keep_checkpoints:
        rep.extra["states"] = states
    return rep


def optimal_omega(width: int) -> float:
    """SOR parameter ``2 / (1 + sin(pi / width))`` for a domain ``width`` sites across."""
    return 2.0 / (1.0 + math.sin(math.pi / max(width, 2)))


def _resolve_omega(omega, mask: np.ndarray) -> float:
    if omega == "auto":
        if not mask.any():
            return 1.0
        idx = np.argwhere(mask)
        return optimal_omega(int(np.max(idx.max(axis=0) - idx.min(axis=0))) + 2)
    omega = float(omega)
    if not 0 < omega < 2:
        raise UsageError("omega must lie in (0, 2)")
    return omega


def least_supersolution(prob: Problem, eps: float | None = None, omega=DEFAULT_OMEGA,
                        add_tol: float = 1e-9, max_outer: int = 100_000, max_sweeps: int = 10_000_000,
                        max_removals: int = 10) -> SolveReport:
    """Least supersolution by an active-set iteration.

    The trial support ``Omega`` starts at ``W``.  Each pass solves
    ``lap u = 0`` on ``Omega \\ W`` with ``u = h`` on ``W`` and ``u = 0`` off
    ``Omega`` by red-black SOR to residual ``eps / 10``, then adds every
    outer-boundary site with ``lap u > 1 + add_tol`` and drops any site where
    ``u < 0``.  It stops when ``Omega`` no longer changes.  Because the trial
    solution never exceeds the least supersolution, additions are never
    undone in exact arithmetic.

    ``omega="auto"`` picks the optimal SOR parameter for the current width.
    """
    eps = _default_eps(prob.h) if eps is None else eps
    if eps <= 0:
        raise UsageError("eps must be positive")
    t0 = time.perf_counter()
    grid = _Grid(prob.box)
    wet = prob.wetted_mask()
    frame = prob.box.frame_mask()
    u = grid.pad(np.where(wet, float(prob.h), 0.0))
    omega_mask = wet.copy() if prob.h > 0 else np.zeros_like(wet)
    total_sweeps = outer_it = removals = 0
    tol = eps / 10
    while True:
        outer_it += 1
        if outer_it > max_outer:
            raise IterationCap(f"active set still changing after {max_outer} passes")
        free = omega_mask & ~wet
        red = grid.flat[free & grid.parity]
        black = grid.flat[free & ~grid.parity]
        w = _resolve_omega(omega, omega_mask)
        sweeps, res = _kernels.sor_solve(u, red, black, grid.strides, w, tol, max_sweeps, 10)
        total_sweeps += sweeps
        if res > tol:
            raise NoConvergence(f"SOR residual {res:.3g} above {tol:.3g} after {sweeps} sweeps")
        vals = grid.unpad(u)
        neg = free & (vals < 0)
        outer, _ = boundary_masks(omega_mask)
        lap = grid.laplacian(u)
        add = outer & ~wet & (lap > 1.0 + add_tol)
        if neg.any():
            removals += 1
            if removals > max_removals:
                raise NonMonotoneActiveSet("active set keeps losing sites")
            omega_mask &= ~neg
            u[grid.flat[neg]] = 0.0
        if not add.any() and not neg.any():
            break
        omega_mask |= add
        if (omega_mask & frame).any():
            raise BoxTooSmall("active set reached the box frame")
    return _report(grid.unpad(u), prob, "active_set", total_sweeps, eps, outer_iterations=outer_it,
                   elapsed=time.perf_counter() - t0, extra={"omega": omega, "removals": removals})


SOLVERS = {"flow": sandpile_flow, "active_set": least_supersolution}


def solve_with_retry(prob: Problem, method: str = "active_set", retries: int = 3, **kwargs) -> SolveReport:
    """Run a solver, doubling the box whenever it raises :class:`BoxTooSmall`."""
    solver = SOLVERS[method]
    for attempt in range(retries + 1):
        try:
            return solver(prob, **kwargs)
        except BoxTooSmall:
            if attempt == retries:
                raise
            prob = prob.with_box(prob.box.grown(2))
    raise AssertionError("unreachable")


# -------------------------------------------------------------------- energy


def energy(u: ScalarField, prob: Problem) -> float:
    """Discrete energy ``J``.

    ``J = #{x not in W : u(x) > 0} + d * sum (u(x) - u(y))^2`` over ordered
    neighbour pairs not both in ``W``, so every edge is counted twice.
    Sites outside the field's box read zero.
    """
    vals = u.values
    d = vals.ndim
    wet = prob.wetted.to_mask(u.box)
    count = int(np.count_nonzero((vals > 0) & ~wet))
    up = np.pad(vals, 1)
    wp = np.pad(wet, 1)
    grad = 0.0
    for ax in range(d):
        a = [slice(None)] * d
        b = [slice(None)] * d
        a[ax] = slice(1, None)
        b[ax] = slice(None, -1)
        diff = up[tuple(a)] - up[tuple(b)]
        both = wp[tuple(a)] & wp[tuple(b)]
        grad += float(np.sum(np.where(both, 0.0, diff * diff)))
    return count + d * 2.0 * grad


def _neighbours(x):
    x = tuple(x)
    for k in range(len(x)):
        for s in (1, -1):
            y = list(x)
            y[k] += s
            yield tuple(y)


def _site_energy(u: ScalarField, x, t: float, wet: SiteSet) -> float:
    # Terms of J that involve the value t at x (x not wetted).
    d = u.d
    val = 1.0 if t > 0 else 0.0
    val += d * 2.0 * sum((t - u[y]) ** 2 for y in _neighbours(x))
    return val


def replace_site(u: ScalarField, x, value: float) -> ScalarField:
    out = u.copy()
    out.values[u.box.index(x)] = value
    return out


def neighbour_mean(u: ScalarField, x) -> float:
    return sum(u[y] for y in _neighbours(x)) / (2 * u.d)


@dataclass(frozen=True)
class LocalMinVerdict:
    """Smallest single-site energy change found and where."""

    min_delta: float
    worst_site: tuple | None
    harmonic_delta: dict
    zero_delta: dict
    tol: float

    @property
    def passed(self) -> bool:
        return self.min_delta >= -self.tol


def check_local_min(report: SolveReport, prob: Problem, sample: SiteSet, tol: float = 1e-9) -> LocalMinVerdict:
    """Test single-site variations at every sampled site off ``W``.

    For each site the energy is compared after the harmonic replacement
    (neighbour mean), after the zero replacement, and at the exact line
    minimum over the value at ``x``.  ``J`` restricted to one site is
    ``1_{t>0} + 2d sum_y (t - u(y))^2``, minimised over ``t`` by ``0`` or by
    the neighbour mean when that is positive.
    """
    u = report.u
    min_delta, worst = math.inf, None
    harm, zero = {}, {}
    for x in sample:
        if not u.box.contains(x):
            raise UsageError(f"sample site {x} outside the box")
        if x in prob.wetted:
            continue
        cur = u[x]
        a = neighbour_mean(u, x)
        base = _site_energy(u, x, cur, prob.wetted)
        harm[x] = _site_energy(u, x, a, prob.wetted) - base
        zero[x] = _site_energy(u, x, 0.0, prob.wetted) - base
        line = min(zero[x], harm[x] if a > 0 else math.inf)
        delta = min(harm[x], zero[x], line)
        if delta < min_delta:
            min_delta, worst = delta, x
    if worst is None:
        min_delta = 0.0
    return LocalMinVerdict(min_delta, worst, harm, zero, tol)


# ---------------------------------------------------------------- half-space


def _solve_dirichlet(values: np.ndarray, free: np.ndarray, tol: float, omega="auto",
                     max_sweeps: int = 10_000_000) -> tuple[np.ndarray, int, float]:
    box = LatticeBox((0,) * values.ndim, tuple(s - 1 for s in values.shape))
    grid = _Grid(box)
    u = grid.pad(values)
    red = grid.flat[free & grid.parity]
    black = grid.flat[free & ~grid.parity]
    w = _resolve_omega(omega, free)
    sweeps, res = _kernels.sor_solve(u, red, black, grid.strides, w, tol, max_sweeps, 10)
    if res > tol:
        raise NoConvergence(f"SOR residual {res:.3g} above {tol:.3g}")
    return grid.unpad(u), sweeps, res


def _halfspace_solve(levels: list[np.ndarray], R: int, d: int, tol: float, omega):
    # levels[j] is zeta^(j+1) . x on the box; E is the nested half-space union.
    box = LatticeBox.centered(R, d)
    inside = np.zeros(box.shape, dtype=bool)
    prefix_zero = np.ones(box.shape, dtype=bool)
    for lv in levels:
        inside |= prefix_zero & (lv > 0)
        prefix_zero &= lv == 0
    frame = box.frame_mask()
    lead = levels[0]
    values = np.where(inside, np.maximum(0.0, lead), 0.0).astype(float)
    free = inside & ~frame
    u, _, _ = _solve_dirichlet(values, free, tol, omega)
    field_ = ScalarField(box, u)
    centre = (R,) * d
    lap0 = float(neighbour_sum_array(np.pad(u, 1))[centre] - 2 * d * u[centre])
    return field_, lap0


def _levels(zetas: list[tuple[int, ...]], R: int, d: int) -> list[np.ndarray]:
    coords = LatticeBox.centered(R, d).coordinates()
    return [sum(int(z[k]) * coords[k] for k in range(d)) for z in zetas]


def halfspace_profile(p, R: int, tol: float = 1e-11, omega="auto", estimate_err: bool = False,
                      refine: bool = False) -> tuple[ScalarField, HEstimate]:
    """Numerical half-space solution in ``{|x|_inf <= R}`` and ``H = lap u(0)``.

    ``u = max(0, p.x)`` on the box frame, ``u = 0`` on ``{p.x <= 0}`` and
    ``u`` is harmonic elsewhere.  ``p`` may be any nonzero integer vector, in
    which case the value approximates ``t H(p / t)``.  The error is the
    heuristic ``|p|_inf / R`` unless ``estimate_err`` is set, in which case a
    second solve at ``2R`` gives ``4 |H_R - H_2R|``, twice the ``O(1/R)``
    extrapolated error.  ``refine`` returns the
    Richardson value ``2 H_2R - H_R`` instead.
    """
    p = tuple(int(c) for c in p)
    if not any(p):
        raise ZeroVector("slope must be nonzero")
    d = len(p)
    pinf = max(abs(c) for c in p)
    if R < 8 * pinf:
        raise BoxTooSmall(f"R={R} below 8 |p|_inf = {8 * pinf}")
    scale = tol * pinf
    u, H_R = _halfspace_solve(_levels([p], R, d), R, d, scale, omega)
    if not (estimate_err or refine):
        return u, HEstimate(p, H_R, "halfspace_numeric", pinf / R)
    _, H_2R = _halfspace_solve(_levels([p], 2 * R, d), 2 * R, d, scale, omega)
    if refine:
        return u, HEstimate(p, 2 * H_2R - H_R, "halfspace_numeric", abs(H_2R - H_R))
    return u, HEstimate(p, H_R, "halfspace_numeric", 4 * abs(H_R - H_2R))


def _integer_zetas(zetas) -> list[tuple[int, ...]]:
    out = []
    for z in zetas:
        fr = []
        for c in z:
            if isinstance(c, (int, np.integer, Fraction)):
                fr.append(Fraction(c))
            elif isinstance(c, float) and c.is_integer():
                fr.append(Fraction(int(c)))
            else:
                raise IrrationalZeta(f"entry {c!r} is not an integer or fraction")
        lcm = math.lcm(*(f.denominator for f in fr))
        out.append(tuple(int(f * lcm) for f in fr))
    return out


def limit_halfspace_profile(zetas, R: int, tol: float = 1e-11, omega="auto") -> tuple[ScalarField, float]:
    """Solution on the nested half-space union ``E(zeta^1, ..., zeta^k)`` and ``lap u(0)``.

    ``E`` is the union over ``j`` of ``{zeta^i . z = 0 for i < j, zeta^j . z > 0}``.
    Entries must be integers or fractions; each vector is scaled to integers.
    """
    if not zetas:
        raise UsageError("at least one zeta is required")
    zs = _integer_zetas(zetas)
    d = len(zs[0])
    if any(len(z) != d for z in zs):
        raise UsageError("zetas must share a dimension")
    if not any(zs[0]):
        raise ZeroVector("zeta^1 must be nonzero")
    for i in range(len(zs)):
        for j in range(i + 1, len(zs)):
            if sum(a * b for a, b in zip(zs[i], zs[j])) != 0:
                raise NonOrthogonal(f"zeta^{i + 1} and zeta^{j + 1} are not orthogonal")
    pinf = max(abs(c) for c in zs[0])
    if R < 8 * pinf:
        raise BoxTooSmall(f"R={R} below 8 |zeta^1|_inf")
    return _halfspace_solve(_levels(zs, R, d), R, d, tol * pinf, omega)


# -------------------------------------------------------------------- facets


@dataclass(frozen=True)
class FacetReport:
    """The discrete face of the support in direction ``p``.

    ``face_sites`` are the support sites with ``p.x < face_offset + slack``,
    one lattice layer per unit of slack.
    """

    p: Slope
    face_offset: int
    face_sites: SiteSet
    extent: float
    extent_over_h: float
    slack: int


def _diameter(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    rank = np.linalg.matrix_rank(points - points[0]) if len(points) > 1 else 0
    if rank == 0:
        return 0.0
    if len(points) > 2000 and rank == points.shape[1]:
        points = points[ConvexHull(points).vertices]
    elif len(points) > 2000:
        # Lower-dimensional set: its diameter is attained at extreme points along some direction.
        centred = points - points.mean(axis=0)
        _, _, vt = np.linalg.svd(centred, full_matrices=False)
        proj = centred @ vt[:rank].T
        points = points[ConvexHull(proj).vertices] if rank >= 2 else points[[proj.argmin(), proj.argmax()]]
    return float(pdist(points).max())


def facet_length(report: SolveReport, p, slack: int | None = None) -> FacetReport:
    """Measure the face of the support in direction ``p``."""
    p = p if isinstance(p, Slope) else Slope(tuple(int(c) for c in p))
    slack = sum(abs(c) for c in p.coords) if slack is None else int(slack)
    if len(report.support) == 0:
        raise EmptySupport("support is empty")
    pts = report.support.array
    pv = np.array(p.coords, dtype=np.int64)
    dots = pts @ pv
    offset = int(dots.min())
    face = pts[dots < offset + slack]
    pf = pv.astype(float)
    proj = face - np.outer(face @ pf / (pf @ pf), pf)
    extent = _diameter(proj)
    h = report.h if report.h > 0 else 1.0
    return FacetReport(p, offset, SiteSet(face, d=p.d), extent, extent / h, slack)


def convexity_defect(report: SolveReport) -> float:
    """``(#lattice points in the hull of the support - #support) / #support``."""
    pts = report.support.array
    n = len(pts)
    if n == 0:
        raise EmptySupport("support is empty")
    if n == 1:
        return 0.0
    d = pts.shape[1]
    base = pts[0]
    rank = int(np.linalg.matrix_rank((pts - base).astype(float)))
    if rank == 1:
        span = pts - base
        far = span[np.argmax(np.abs(span).sum(axis=1))]
        g = math.gcd(*(int(abs(c)) for c in far))
        step = far // g
        t = (span @ step) // (step @ step)
        hull_count = int(t.max() - t.min()) + 1
        return (hull_count - n) / n
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    cand = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    if rank < d:
        centred = (pts - base).astype(float)
        _, _, vt = np.linalg.svd(centred, full_matrices=False)
        basis = vt[:rank]
        rel = (cand - base).astype(float)
        resid = rel - (rel @ basis.T) @ basis
        cand = cand[np.abs(resid).max(axis=1) < 1e-9]
        pts_c, cand_c = centred @ basis.T, (cand - base).astype(float) @ basis.T
    else:
        pts_c, cand_c = pts.astype(float), cand.astype(float)
    hull = ConvexHull(pts_c)
    A, b = hull.equations[:, :-1], hull.equations[:, -1]
    inside = np.all(cand_c @ A.T + b <= 1e-9, axis=1)
    return (int(np.count_nonzero(inside)) - n) / n


def support_radius(report: SolveReport) -> float:
    """Largest Euclidean norm of a support site divided by ``h``."""
    if len(report.support) == 0:
        return 0.0
    nrm = np.sqrt(np.sum(report.support.array.astype(float) ** 2, axis=1)).max()
    return float(nrm / report.h) if report.h > 0 else float(nrm)


def lipschitz_constant(u: ScalarField) -> float:
    """Largest difference of ``u`` across a lattice edge (zero outside the box)."""
    up = np.pad(u.values, 1)
    best = 0.0
    for ax in range(u.d):
        best = max(best, float(np.abs(np.diff(up, axis=ax)).max()))
    return best
