import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facetlab.lattice import LatticeBox, ScalarField, SiteSet, discrete_laplacian
from facetlab.solver import Problem, energy, neighbour_mean, replace_site
from oracles import tent


def brute_energy(u: ScalarField, wet: set) -> float:
    # Literal double loop over ordered neighbour pairs.
    d = u.d
    box = u.box
    sites = list(itertools.product(*(range(a - 1, b + 2) for a, b in zip(box.lo, box.hi))))
    total = sum(1.0 for x in sites if x not in wet and u[x] > 0)
    for x in sites:
        for k in range(d):
            for s in (1, -1):
                y = tuple(c + (s if i == k else 0) for i, c in enumerate(x))
                if x in wet and y in wet:
                    continue
                total += d * (u[x] - u[y]) ** 2
    return total


def test_zero_field_energy():
    prob = Problem(SiteSet([(0, 0)]), 0.0)
    u = ScalarField(prob.box, np.zeros(prob.box.shape))
    assert energy(u, prob) == 0.0


def test_tent_energy_by_hand():
    # u = (..., 0, 1, 2, 1, 0, ...): two dry positive sites and four unit edges,
    # each counted twice with weight d = 1.
    prob = Problem(SiteSet([[0]], d=1), 2.0)
    u = ScalarField(prob.box, tent(2, prob.box.lo[0], prob.box.hi[0]))
    assert energy(u, prob) == 10.0


def test_energy_matches_brute_force():
    rng = np.random.default_rng(3)
    for d in (1, 2, 3):
        box = LatticeBox.centered(3, d)
        wet = SiteSet([(0,) * d, (1,) + (0,) * (d - 1)])
        prob = Problem(wet, 1.0, box)
        vals = rng.random(box.shape) * (rng.random(box.shape) > 0.3)
        u = ScalarField(box, vals)
        assert energy(u, prob) == pytest.approx(brute_energy(u, wet.to_set()), rel=1e-13)


fields = st.integers(min_value=0, max_value=2**32 - 1)


@settings(max_examples=60, deadline=None)
@given(seed=fields, d=st.integers(1, 3))
def test_harmonic_replacement_identity(seed, d):
    rng = np.random.default_rng(seed)
    box = LatticeBox.centered(4, d)
    prob = Problem(SiteSet([(-2,) * d]), 1.0, box)
    vals = rng.random(box.shape) * rng.integers(0, 2, box.shape) * rng.uniform(0.01, 10)
    x = tuple(int(c) for c in rng.integers(-1, 3, d))
    vals[box.index(x)] = 0.0
    u = ScalarField(box, vals)
    a = neighbour_mean(u, x)
    if a == 0:
        vals[box.index(tuple(c + 1 if i == 0 else c for i, c in enumerate(x)))] = 0.5
        a = neighbour_mean(u, x)
    lap = discrete_laplacian(u, x)
    delta = energy(replace_site(u, x, a), prob) - energy(u, prob)
    assert abs(delta - (1 - lap**2)) <= 1e-9 * max(1.0, lap**2)


@settings(max_examples=40, deadline=None)
@given(seed=fields, d=st.integers(1, 3))
def test_zero_replacement_identity(seed, d):
    rng = np.random.default_rng(seed)
    box = LatticeBox.centered(4, d)
    prob = Problem(SiteSet([(-2,) * d]), 1.0, box)
    vals = rng.random(box.shape) + 0.01
    x = (0,) * d
    u = ScalarField(box, vals)
    a = neighbour_mean(u, x)
    u = replace_site(u, x, a)
    delta = energy(replace_site(u, x, 0.0), prob) - energy(u, prob)
    assert delta == pytest.approx((2 * d) ** 2 * a**2 - 1, rel=1e-10, abs=1e-10)


def test_zero_state_is_not_lowered_by_harmonic_replacement_when_lap_small():
    # lap u(x) <= 1 at a dry zero site makes the harmonic replacement non-improving.
    box = LatticeBox.centered(4, 2)
    prob = Problem(SiteSet([(-2, -2)]), 1.0, box)
    vals = np.zeros(box.shape)
    vals[box.index((1, 0))] = 0.9
    u = ScalarField(box, vals)
    x = (0, 0)
    delta = energy(replace_site(u, x, neighbour_mean(u, x)), prob) - energy(u, prob)
    assert delta == pytest.approx(1 - 0.81)
