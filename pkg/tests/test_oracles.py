import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from satiss.grid import GridFunction, norm_l2
from satiss.oracles import (
    CounterexampleProfile,
    alpha_n,
    counterexample_norm_sq,
    counterexample_profile,
    counterexample_value,
    exact_sat_ode_solution,
    exact_sat_transport_solution,
    find_witness_n,
    geometric_ladder,
    norm_lower_bound,
    sat_ode_flow,
    threshold_integral_quadrature,
    xi_threshold,
)


@pytest.mark.parametrize(
    "f0, t, expected",
    [
        (2.0, 0.5, 1.5),
        (0.5, 1.0, 0.5 * math.exp(-1)),
        (1.2, 1.0, math.exp(-0.8)),
        (-2.0, 0.5, -1.5),
        (-1.2, 1.0, -math.exp(-0.8)),
        (-0.5, 1.0, -0.5 * math.exp(-1)),
    ],
)
def test_ode_solution_branches(f0, t, expected):
    x = exact_sat_ode_solution(GridFunction.constant(f0, 3), t)
    np.testing.assert_allclose(x.values, expected, rtol=1e-14)


@pytest.mark.parametrize("t", [0.3, 1.0, 2.5])
def test_ode_solution_continuous_at_branch_points(t):
    for edge in (1.0, 1.0 + t, -1.0, -1.0 - t):
        left, right = sat_ode_flow([edge - 1e-10, edge + 1e-10], t)
        assert abs(left - right) < 1e-8


def test_ode_solution_solves_the_ode():
    f = np.linspace(-4, 4, 41)
    t, h = 0.7, 1e-6
    deriv = (sat_ode_flow(f, t + h) - sat_ode_flow(f, t - h)) / (2 * h)
    np.testing.assert_allclose(deriv, -np.clip(sat_ode_flow(f, t), -1, 1), atol=1e-6)


@settings(max_examples=300)
@given(st.floats(-50, 50), st.floats(0, 50))
def test_ode_solution_pointwise_contraction(f0, t):
    assert abs(sat_ode_flow([f0], t)[0]) <= abs(f0) + 1e-15


def test_ode_solution_rejects_negative_time():
    with pytest.raises(ValueError):
        sat_ode_flow([1.0], -0.1)


def test_transport_constant_profile_matches_ode():
    f = GridFunction.constant(1.7, 20)
    np.testing.assert_array_equal(exact_sat_transport_solution(f, 0.35).values, exact_sat_ode_solution(f, 0.35).values)


def test_transport_full_period():
    f = GridFunction(np.random.default_rng(2).uniform(-3, 3, 50))
    np.testing.assert_array_equal(exact_sat_transport_solution(f, 1.0).values, exact_sat_ode_solution(f, 1.0).values)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2000), st.integers(0, 2**32 - 1))
def test_transport_norm_identity(k, seed):
    f = GridFunction(np.random.default_rng(seed).uniform(-5, 5, 400))
    t = k / 400
    # a permutation of cells; only summation order can differ
    assert abs(norm_l2(exact_sat_transport_solution(f, t)) - norm_l2(exact_sat_ode_solution(f, t))) <= 1e-12


def test_transport_strict_alignment():
    with pytest.raises(ValueError):
        exact_sat_transport_solution(GridFunction.zeros(10), 0.05)


def test_alpha_n():
    assert alpha_n(1) == 0.0
    assert alpha_n(2) == 0.25
    with pytest.raises(ValueError):
        alpha_n(0)


def test_counterexample_profile_values():
    np.testing.assert_array_equal(counterexample_profile(1, 10).values, np.ones(10))
    assert counterexample_value(2, 0.25) == pytest.approx(1.0, rel=1e-14)
    assert CounterexampleProfile(3).alpha == alpha_n(3)
    with pytest.raises(ValueError):
        CounterexampleProfile(0)


@pytest.mark.parametrize("n", [1, 2, 10, 100, 10**6])
def test_family_has_unit_norm(n):
    assert counterexample_norm_sq(n, 0.0) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_family_grid_norm(n):
    # midpoint sums resolve the singularity only for mild exponents
    assert norm_l2(counterexample_profile(n, 10**6)) ** 2 == pytest.approx(1.0, abs=1e-2)


@pytest.mark.parametrize("n, t, expected", [(2, 0.0, 0.25), (4, 0.0, 2 ** (-8 / 3))])
def test_xi_threshold(n, t, expected):
    assert xi_threshold(n, t) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("n", [2, 3, 10, 1000])
@pytest.mark.parametrize("t", [0.0, 0.5, 7.0])
def test_xi_threshold_round_trip(n, t):
    assert counterexample_value(n, xi_threshold(n, t)) == pytest.approx(1 + t, rel=1e-12)


def test_xi_threshold_needs_singular_profile():
    with pytest.raises(ValueError):
        xi_threshold(1, 0.5)


def test_norm_lower_bound_examples():
    assert norm_lower_bound(2, 0.0) == pytest.approx(0.5, rel=1e-14)
    assert norm_lower_bound(10, 1.0) == pytest.approx(0.5596, abs=5e-4)


def test_norm_lower_bound_against_plain_quadrature():
    # independent of the substitution used in threshold_integral_quadrature
    n, t = 3, 0.5
    xi_t = xi_threshold(n, t)
    val, _ = integrate.quad(lambda x: (counterexample_value(n, x) - t) ** 2, 0, xi_t, limit=200)
    assert norm_lower_bound(n, t) == pytest.approx(val, rel=1e-8)


@pytest.mark.parametrize("t", [0.5, 1.0, 5.0])
def test_norm_lower_bound_tends_to_one(t):
    values = [norm_lower_bound(n, t) for n in geometric_ladder(20)]
    assert values[-1] > 0.99
    assert all(v < 1 for v in values)
    tail = values[5:]
    assert all(b >= a for a, b in zip(tail, tail[1:]))


@pytest.mark.parametrize("n", [2, 4, 10, 64])
@pytest.mark.parametrize("t", [0.5, 1.0, 10.0])
def test_lower_bound_below_full_norm(n, t):
    assert norm_lower_bound(n, t) <= counterexample_norm_sq(n, t) + 1e-9


def test_threshold_quadrature_matches_closed_form():
    for n in (2, 7, 50, 10**5):
        assert threshold_integral_quadrature(n, 1.0) == pytest.approx(norm_lower_bound(n, 1.0), rel=1e-8)


def test_transport_family_norms_equal():
    for t in (0.3, 1.0, 2.7):
        assert counterexample_norm_sq(8, t, transport=True) == pytest.approx(counterexample_norm_sq(8, t), rel=1e-9)


def test_family_norm_decreases_over_time():
    norms = [counterexample_norm_sq(10, t) for t in (0.0, 10.0, 100.0, 1000.0)]
    assert all(b < a for a, b in zip(norms, norms[1:]))


def test_find_witness_examples():
    w = find_witness_n(1.0, 0.5, range(2, 101))
    assert w.found and w.n <= 10 and w.bound > 0.25
    assert find_witness_n(0.0, 0.5, [2]).n == 2
    assert find_witness_n(1.0, 0.999, [10**6]).found


def test_find_witness_not_found_and_errors():
    assert not find_witness_n(1.0, 0.99, [2, 3]).found
    with pytest.raises(ValueError):
        find_witness_n(1.0, 0.5, [])
    with pytest.raises(ValueError):
        find_witness_n(1.0, 1.5, [2])


def test_geometric_ladder():
    assert geometric_ladder(3) == [2, 4, 8]
    assert geometric_ladder()[-1] == 2**20
