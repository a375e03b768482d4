import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facetlab.errors import NoConvergence, UsageError
from facetlab.hamiltonian import (HEstimate, canonical_slopes, char_poly, generic_constant, h_dual, h_hitting,
                                  h_integral, h_lattice_sum, h_roots, lattice_exponent_integral, lattice_sum,
                                  level_set_boundary)
from facetlab.lattice import Slope, primitive_vectors
from oracles import CATALAN, mean_log_closed_form, trapezoid_mean_log

SQRT5 = math.sqrt(5)
H21 = math.sqrt(5 * (3 + SQRT5) / 2)


def test_char_poly_examples():
    assert char_poly((1, 0)).int_coeffs == (1, -2, 1)
    cp = char_poly((1, 1))
    assert (cp.n, cp.m) == (1, 2)
    assert cp.coeffs == (1, -2, 1)
    cp = char_poly((2, 1))
    assert cp.coeffs == (1, 1, -4, 1, 1)
    # (lam - 1)^2 (lam^2 + 3 lam + 1)
    assert cp.deflated() == (1, 3, 1)


def test_char_poly_rational_coefficients():
    cp = char_poly((2, 2, 1))
    assert cp.coeffs == (1, Fraction(1, 2), -3, Fraction(1, 2), 1)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-9, 9), min_size=1, max_size=4).filter(lambda v: math.gcd(*v) == 1))
def test_char_poly_invariants(v):
    p = Slope(tuple(v))
    cp = char_poly(p)
    c = cp.coeffs
    assert c == c[::-1] and c[0] == 1 and len(c) == 2 * p.n + 1
    deg = len(c) - 1
    assert sum(c) == 0
    assert sum(a * (deg - j) for j, a in enumerate(c)) == 0
    d2 = sum(a * (deg - j) * (deg - j - 1) for j, a in enumerate(c))
    assert d2 * cp.m / 2 == p.norm2


@pytest.mark.parametrize("func", [h_roots, h_integral, h_hitting])
def test_rational_examples(func):
    assert func((1, 0)).value == pytest.approx(1.0, abs=1e-10)
    assert func((1, 1)).value == pytest.approx(2.0, abs=1e-10)
    assert func((2, 1)).value == pytest.approx(H21, abs=1e-10)


def test_hitting_limit_value():
    est = h_hitting((2, 1))
    assert est.value / 5 == pytest.approx(0.7236068, abs=1e-7)
    with pytest.raises(UsageError):
        h_hitting((3, 1), K=8)


def test_integral_closed_form_mean():
    # h(t) = 3 + 2 cos t for p = (2, 1).
    a = mean_log_closed_form(3, 2)
    assert a == pytest.approx(math.log((3 + SQRT5) / 2), abs=1e-15)
    assert h_integral((2, 1)).value == pytest.approx(math.sqrt(5 * math.exp(a)), abs=1e-12)


def test_integral_no_convergence():
    with pytest.raises(NoConvergence):
        from facetlab.hamiltonian import mean_log_h
        mean_log_h((40, 1), nodes=16, max_nodes=32)


@pytest.mark.parametrize("d", [2, 3])
def test_cross_method_agreement(d):
    for p in canonical_slopes(d, 10):
        vals = [f(p).value for f in (h_roots, h_integral, h_hitting)]
        assert max(vals) - min(vals) <= 1e-8 * max(1.0, vals[0]), p


def test_symmetry_all_methods():
    for p in [(3, 1), (2, 1, 1), (4, 3, 1)]:
        ref = h_roots(p).value
        for q in [tuple(reversed(p)), tuple(-c for c in p), (p[0], -p[1]) + tuple(p[2:])]:
            for f in (h_roots, h_integral, h_hitting):
                assert f(q).value == pytest.approx(ref, rel=1e-10)


def test_barrier_interval():
    for p in canonical_slopes(3, 5):
        est = h_roots(p)
        assert est.within_barriers(), p


@pytest.mark.parametrize("p, H", [((1, 0), 1.0), ((1, 1), 2.0), ((2, 1), H21)])
def test_lattice_sum_examples(p, H):
    est = h_lattice_sum(p, R=40)
    assert abs(est.value - H) <= est.err
    est60 = h_lattice_sum(p)
    assert abs(est60.value - H) <= est60.err
    assert est60.err <= 1e-4 * H


def test_lattice_sum_within_err_d2():
    for p in canonical_slopes(2, 6):
        est = h_lattice_sum(p)
        assert abs(est.value - h_roots(p).value) <= est.err, p


def test_lattice_sum_within_err_d3():
    for p in [(1, 0, 0), (1, 1, 1), (3, 2, 1)]:
        est = h_lattice_sum(p)
        assert abs(est.value - h_roots(p).value) <= est.err, p


def test_lattice_sum_matches_integral_d3():
    # Internal consistency of the two exponent formulas in d = 3.
    for p in [(1, 1, 0), (2, 1, 0)]:
        ls = lattice_sum(p)
        assert abs(ls.exponent - lattice_exponent_integral(p)) <= ls.exponent_err


def test_exponent_integral_against_plain_trapezoid():
    for p in [(1, 0), (2, 1), (1, 1, 1)]:
        assert lattice_exponent_integral(p) == pytest.approx(trapezoid_mean_log(p), abs=2e-3)


def test_bound_mode_is_valid_bound():
    for p in [(1, 0), (3, 1)]:
        ls = lattice_sum(p, tail="bound")
        gap = ls.partial - lattice_exponent_integral(p)
        assert 0 <= gap <= ls.tail_err + ls.coeff_err


def test_h_dual_examples():
    assert h_dual((1, 0), h_roots((1, 0))) == pytest.approx(4.0)
    assert h_dual((1, 1), h_roots((1, 1))) == pytest.approx(4.0)
    assert h_dual((2, 1), h_roots((2, 1))) == pytest.approx(20 / H21)
    with pytest.raises(UsageError):
        h_dual((1, 0), h_roots((2, 1)))


def test_generic_constant_d2_catalan():
    g = generic_constant(2)
    assert g == pytest.approx(math.exp(2 * CATALAN / math.pi), abs=1e-5)
    assert 1 / g == pytest.approx(math.exp(-2 * CATALAN / math.pi), abs=1e-5)


def test_generic_constant_d3_below_all_sampled():
    g = generic_constant(3)
    assert 2.2 < g < 2.45
    for p in canonical_slopes(3, 2):
        assert h_roots(p).value / p.norm < g


def test_valley_sequence_monotone_approach():
    g = generic_constant(2)
    ratios = [h_roots((n, 1)).value / math.hypot(n, 1) for n in range(1, 51)]
    assert all(r < g for r in ratios)
    assert abs(ratios[-1] - g) <= 0.01
    assert ratios[-1] > ratios[0]


def test_discontinuity_gap_d3():
    base = h_roots((1, 1, 0)).value / math.sqrt(2)
    assert base < generic_constant(3)
    # Nearby directions whose lattice does not contain Lambda_(1,1,0) sit strictly higher.
    near = [(n, n, 1) for n in range(2, 9)] + [(n + 1, n, 0) for n in range(1, 9)]
    margin = min(h_roots(q).value / math.sqrt(sum(c * c for c in q)) for q in near) - base
    assert margin > 0


def test_level_set_examples():
    s = level_set_boundary(3)
    idx = {tuple(p): i for i, p in enumerate(s.slopes)}
    i = idx[(1, 0)]
    assert np.allclose(s.black[i], [1, 0]) and np.allclose(s.gray[i], [0.25, 0])
    j = idx[(1, 1)]
    assert np.hypot(*s.black[j]) == pytest.approx(1 / math.sqrt(2))
    assert s.generic_black_radius == pytest.approx(math.exp(-2 * CATALAN / math.pi), abs=1e-5)
    assert np.all(np.hypot(s.black[:, 0], s.black[:, 1]) > s.generic_black_radius)
    assert len(s.slopes) == len(primitive_vectors(2, 3))


def test_estimate_validation():
    with pytest.raises(UsageError):
        HEstimate((1, 0), -1.0, "roots")
    with pytest.raises(UsageError):
        HEstimate((1, 0), 1.0, "magic")
