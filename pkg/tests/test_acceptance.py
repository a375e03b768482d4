"""The ten acceptance criteria at their stated tolerances.

Each test records a one-line PASS/FAIL summary, printed at the end of the
pytest run.  Run ``python3 tests/test_acceptance.py`` to execute them alone.
"""
import itertools
import math
import time

import numpy as np
import pytest

from acceptance_log import record
from facetlab import fourier, hamiltonian
from facetlab.hamiltonian import (estimate, generic_constant, h_hitting, h_integral, h_roots, lattice_exponent_integral,
                                  lattice_sum)
from facetlab.lattice import LatticeBox, ScalarField, SiteSet, discrete_laplacian, primitive_vectors
from facetlab.solver import (Problem, energy, facet_length, halfspace_profile, least_supersolution, neighbour_mean,
                             replace_site, sandpile_flow, support_radius)
from oracles import CATALAN, tent

H21_SQUARED = 5 * (3 + math.sqrt(5)) / 2


def _warm():
    # Compile the numba kernels outside the timed regions.
    h_roots((1, 0))
    lattice_sum((1, 1), R=4)
    least_supersolution(Problem(SiteSet([(0, 0)]), 2.0))
    sandpile_flow(Problem(SiteSet([(0, 0)]), 2.0))


@pytest.fixture(scope="module", autouse=True)
def warm():
    _warm()


def _cold():
    # Drop memoised coefficients so runtimes are measured from scratch.
    fourier._tables.clear()
    hamiltonian._generic.cache_clear()


def test_c01_exact_rational_values():
    _cold()
    t0 = time.perf_counter()
    worst, lines = 0.0, []
    ok = True
    for p, exact in (((1, 0), 1.0), ((1, 1), 2.0)):
        for m in ("roots", "integral", "hitting"):
            e = abs(estimate(p, m).value - exact)
            worst = max(worst, e)
            ok &= e <= 1e-10
        ls = estimate(p, "lattice_sum", R=60)
        ok &= abs(ls.value - exact) <= ls.err
        lines.append(f"lattice_sum{p} dev={abs(ls.value - exact):.2e} err={ls.err:.2e}")
    dt = time.perf_counter() - t0
    ok &= dt < 1.0
    record(1, ok, f"max formula dev={worst:.1e}; {'; '.join(lines)}; {dt:.2f}s")
    assert ok


def test_c02_closed_form_21():
    t0 = time.perf_counter()
    p = (2, 1)
    dev_r = abs(h_roots(p).value ** 2 - H21_SQUARED)
    dev_i = abs(h_integral(p).value ** 2 - H21_SQUARED)
    dev_h = abs(h_hitting(p, K=512).value ** 2 - H21_SQUARED)
    H = math.sqrt(H21_SQUARED)
    errs = {R: abs(halfspace_profile(p, R)[1].value - H) for R in (32, 64, 128)}
    slope = np.polyfit(np.log(list(errs)), np.log(list(errs.values())), 1)[0]
    dt = time.perf_counter() - t0
    ok = (dev_r <= 1e-10 and dev_i <= 1e-10 and dev_h <= 1e-8 and errs[64] <= 1e-2
          and -1.25 <= slope <= -0.75 and dt < 10)
    record(2, ok, f"roots {dev_r:.1e}, integral {dev_i:.1e}, hitting(K=512) {dev_h:.1e}, halfspace R=64 "
                  f"{errs[64]:.2e}, log-log error slope {slope:.2f}; {dt:.1f}s")
    assert ok


def test_c03_catalan_inradius():
    _cold()
    t0 = time.perf_counter()
    g, gerr = generic_constant(2, with_err=True)
    dt = time.perf_counter() - t0
    target = math.exp(2 * CATALAN / math.pi)
    ok = abs(g - target) <= 1e-4 and dt < 60
    record(3, ok, f"generic_constant(2)={g:.8f} (err {gerr:.1e}), exp(2K/pi)={target:.8f}, "
                  f"inradius 1/g={1 / g:.7f}; {dt:.1f}s")
    assert ok


def test_c04_lattice_sum_vs_integral():
    # Every primitive slope with max|p_k| <= 4 up to sign (24 of them), read literally:
    # the raw partial sum over |q| <= 60 against the rigorous tail bound.
    slopes = [s.coords for s in primitive_vectors(2, 4) if next(c for c in s.coords if c) > 0]
    worst_gap, worst_bound, bad, within, corrected = 0.0, 0.0, [], 0, 0
    for p in slopes:
        exact = lattice_exponent_integral(p)
        ls = lattice_sum(p, R=60, tail="bound")
        gap = abs(ls.partial - exact)
        bound = ls.tail_err + ls.coeff_err
        worst_gap, worst_bound = max(worst_gap, gap), max(worst_bound, ls.tail_err)
        within += gap <= bound
        if gap > bound or ls.tail_err > 5e-4:
            bad.append(p)
        # Not part of the criterion: the same sum with the asymptotic tail added.
        asy = lattice_sum(p, R=60)
        corrected += abs(asy.exponent - exact) <= asy.exponent_err
    ok = not bad
    record(4, ok, f"{len(slopes)} slopes; max |partial - integral|={worst_gap:.2e}, gap within bound "
                  f"{within}/{len(slopes)}, max tail bound={worst_bound:.2e} (need <= 5e-4); failing {len(bad)}; "
                  f"with asymptotic tail {corrected}/{len(slopes)} agree within err")
    assert ok


def test_c05_valley_structure():
    g = generic_constant(2)
    ratios = [h_roots((n, 1)).value / math.hypot(n, 1) for n in range(1, 51)]
    ok = all(r < g for r in ratios) and g - ratios[-1] <= 0.01
    record(5, ok, f"max ratio {max(ratios):.6f} < {g:.6f}; gap at n=50 {g - ratios[-1]:.2e}")
    assert ok


def test_c06_solver_equivalence():
    t0 = time.perf_counter()
    cases = [(Problem(SiteSet([[0]], d=1), 16.0), "d1 {0} h16"), (Problem.ball(2, 8, 2), "d2 r2 h8"),
             (Problem.ball(2, 16, 2), "d2 r2 h16"), (Problem.ball(1, 8, 3), "d3 r1 h8")]
    worst, mono = 0.0, True
    for prob, _ in cases:
        eps = 1e-12 * prob.h
        a = sandpile_flow(prob, eps=eps, checkpoint_every=50)
        b = least_supersolution(prob, eps=eps)
        worst = max(worst, float(np.abs(a.u.values - b.u.values).max()))
        mono &= a.flow_monotone
    dt = time.perf_counter() - t0
    ok = worst <= 1e-8 and mono and dt < 120
    record(6, ok, f"max sup-norm difference {worst:.1e}, flow monotone {mono}; {dt:.1f}s")
    assert ok


def test_c07_d1_exact():
    worst = 0.0
    for h in (4, 8, 16):
        prob = Problem(SiteSet([[0]], d=1), float(h))
        exact = tent(h, prob.box.lo[0], prob.box.hi[0])
        for solver, eps in ((least_supersolution, 1e-14), (sandpile_flow, 1e-16)):
            rep = solver(prob, eps=eps * h)
            worst = max(worst, float(np.abs(rep.u.values - exact).max()))
    ok = worst <= 1e-12
    record(7, ok, f"max |u - max(0, h-|x|)| = {worst:.1e} over both solvers")
    assert ok


@pytest.fixture(scope="module")
def large_runs():
    runs = {}
    for h in (64, 128):
        t0 = time.perf_counter()
        runs[h] = (least_supersolution(Problem.ball(0.05 * h, h, 2), eps=1e-11 * h), time.perf_counter() - t0)
    return runs


def test_c08_first_variation(large_runs):
    rep64, _ = large_runs[64]
    rep, dt = large_runs[128]
    h = 128
    # B_{Rh} is calibrated on the h = 64 run with a 5% margin.
    R = 1.05 * support_radius(rep64)
    v = rep.validators
    in_ball = support_radius(rep) <= R
    ok = (v.harmonic <= 1e-7 * h and v.outer <= 1e-7 and v.inner <= 1e-7 and in_ball and dt < 300)
    record(8, ok, f"harmonic {v.harmonic:.1e}, outer excess {v.outer:.1e}, inner deficit {v.inner:.1e}, "
                  f"support radius/h {support_radius(rep):.4f} <= R={R:.4f}; {dt:.1f}s")
    assert ok


def _octant_images(u):
    for perm in itertools.permutations(range(u.ndim)):
        for flips in itertools.product((False, True), repeat=u.ndim):
            v = np.transpose(u, perm)
            for ax, f in enumerate(flips):
                if f:
                    v = np.flip(v, axis=ax)
            yield v


def test_c09_facets(large_runs):
    f = {h: facet_length(large_runs[h][0], (1, 0)).extent_over_h for h in (64, 128)}
    agree = abs(f[64] - f[128]) <= 0.2 * f[128]
    axes = all(len({facet_length(large_runs[h][0], p).extent for p in ((1, 0), (0, 1), (-1, 0), (0, -1))}) == 1
               for h in (64, 128))
    sym = all(np.array_equal(img, large_runs[h][0].u.values)
              for h in (64, 128) for img in _octant_images(large_runs[h][0].u.values))
    ok = f[64] > 0 and f[128] > 0 and agree and axes and sym
    record(9, ok, f"extent/h (1,0): {f[64]:.4f} at h=64, {f[128]:.4f} at h=128; axes equal {axes}; "
                  f"octant symmetry exact {sym}")
    assert ok


def test_c10_energy_identity():
    rng = np.random.default_rng(20261014)
    worst, n = 0.0, 0
    while n < 1000:
        d = int(rng.integers(1, 4))
        box = LatticeBox.centered(4, d)
        prob = Problem(SiteSet([(-2,) * d]), 1.0, box)
        vals = rng.random(box.shape) * rng.integers(0, 2, box.shape) * rng.uniform(0.01, 5)
        x = tuple(int(c) for c in rng.integers(-1, 3, d))
        vals[box.index(x)] = 0.0
        u = ScalarField(box, vals)
        a = neighbour_mean(u, x)
        if a == 0:
            continue
        lap = discrete_laplacian(u, x)
        delta = energy(replace_site(u, x, a), prob) - energy(u, prob)
        worst = max(worst, abs(delta - (1 - lap**2)))
        n += 1
    ok = worst <= 1e-9
    record(10, ok, f"{n} random fields, max |dJ - (1 - lap^2)| = {worst:.1e}")
    assert ok


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
