import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from satiss.feedback import FeedbackMap
from satiss.grid import FiniteVector, GridFunction, norm_l2
from satiss.oracles import exact_sat_ode_solution, exact_sat_transport_solution
from satiss.systems import (
    BlowUpError,
    Disturbance,
    GeneratorSpec,
    PicardDivergenceError,
    SystemSpec,
    Trajectory,
    gronwall_check,
    integrated_difference,
    picard_iterate,
    semigroup_apply,
    solve_mild,
)

ZERO = GeneratorSpec.zero()
SHIFT = GeneratorSpec.periodic_shift()


def const(c, N=8):
    return GridFunction.constant(c, N)


def random_profile(seed, N=64, amp=3.0):
    return GridFunction(np.random.default_rng(seed).uniform(-amp, amp, N))


# linear semigroups

def test_semigroup_examples():
    x = random_profile(0)
    np.testing.assert_array_equal(semigroup_apply(ZERO, 5.0, x).values, x.values)
    np.testing.assert_array_equal(semigroup_apply(SHIFT, 1.0, x).values, x.values)
    y = semigroup_apply(GeneratorSpec.scalar_diagonal(1.0), math.log(2), const(1.0))
    np.testing.assert_allclose(y.values, 0.5, rtol=1e-15)


def test_semigroup_matrix_uses_exponential():
    A = GeneratorSpec.from_matrix([[0.0, 1.0], [-1.0, 0.0]])
    y = semigroup_apply(A, math.pi / 2, FiniteVector([1.0, 0.0]))
    np.testing.assert_allclose(y.values, [0.0, -1.0], atol=1e-14)


def test_semigroup_errors():
    with pytest.raises(ValueError):
        semigroup_apply(ZERO, -1.0, const(1.0))
    with pytest.raises(ValueError):
        semigroup_apply(SHIFT, 0.01, const(1.0, 8))
    with pytest.raises(TypeError):
        semigroup_apply(SHIFT, 0.5, FiniteVector([1.0]))
    with pytest.raises(ValueError):
        GeneratorSpec("laplacian")
    with pytest.raises(ValueError):
        GeneratorSpec.from_matrix([[1.0, 2.0]])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 5), st.floats(0, 3))
def test_linear_flows_contract(seed, t, alpha):
    rng = np.random.default_rng(seed)
    x = GridFunction(rng.standard_normal(16))
    for A in (ZERO, GeneratorSpec.scalar_diagonal(alpha)):
        assert semigroup_apply(A, t, x).norm() <= x.norm() * (1 + 1e-14)
    k = int(rng.integers(0, 64))
    assert semigroup_apply(SHIFT, k / 16, x).norm() == pytest.approx(x.norm(), rel=1e-14)
    G = rng.standard_normal((4, 4))
    M = G - G.T - alpha * np.eye(4)  # dissipative
    v = FiniteVector(rng.standard_normal(4))
    assert semigroup_apply(GeneratorSpec.from_matrix(M), t, v).norm() <= v.norm() * (1 + 1e-12)


def test_closed_loop_generator():
    s = SystemSpec(GeneratorSpec.scalar_diagonal(0.5), 2.0, FeedbackMap.sat())
    g = s.closed_loop_generator()
    assert g.kind == "scalar_diagonal" and g.damping == 4.0
    B = np.array([[1.0], [0.0]])
    g = SystemSpec(GeneratorSpec.from_matrix(-np.eye(2)), B, FeedbackMap.identity()).closed_loop_generator()
    np.testing.assert_allclose(g.matrix, [[-2.0, 0.0], [0.0, -1.0]])


# disturbances

def test_disturbance_lookup_and_sup():
    d = Disturbance.piecewise([0.0, 0.5], [const(0.2), None])
    assert d.at(0.3).values[0] == 0.2
    assert d.at(0.5) is None
    assert d.sup_norm() == pytest.approx(0.2)
    assert Disturbance.zero().is_zero
    with pytest.raises(ValueError):
        Disturbance.piecewise([0.1], [None])
    with pytest.raises(ValueError):
        Disturbance.piecewise([0.0, 0.5, 0.4], [None, None, None])


def test_integrated_difference_exact():
    d = Disturbance.piecewise([0.0, 0.5], [const(1.0), None])
    out = integrated_difference(d, Disturbance.zero(), np.array([0.0, 0.25, 0.5, 1.0]))
    np.testing.assert_allclose(out, [0.0, 0.25, 0.5, 0.5])


# solver

@pytest.mark.parametrize(
    "A, sigma, x0, T, expected, tol",
    [
        (ZERO, FeedbackMap.identity(), 1.0, 1.0, math.exp(-1), 1e-6),
        (ZERO, FeedbackMap.sat(), 2.0, 0.5, 1.5, 1e-6),
        (GeneratorSpec.scalar_diagonal(1.0), FeedbackMap.identity(), 1.0, 1.0, math.exp(-2), 1e-5),
    ],
)
def test_solve_mild_examples(A, sigma, x0, T, expected, tol):
    traj = solve_mild(SystemSpec(A, 1.0, sigma), const(x0), None, T, 1e-2)
    np.testing.assert_allclose(traj.final.values, expected, atol=tol)
    assert traj.times[-1] == pytest.approx(T)


@pytest.mark.parametrize("substep", ["exact", "rk4"])
@pytest.mark.parametrize("A", [ZERO, SHIFT])
def test_solver_matches_oracle(A, substep):
    f = GridFunction(np.random.default_rng(5).uniform(-3, 3, 400))
    traj = solve_mild(SystemSpec(A, 1.0, FeedbackMap.sat()), f, None, 1.0, 5e-3, substep=substep)
    exact = exact_sat_ode_solution(f, 1.0) if A is ZERO else exact_sat_transport_solution(f, 1.0)
    err = norm_l2(traj.final - exact)
    assert err <= (1e-12 if substep == "exact" else 1e-6)


def test_rk4_substep_converges():
    f = GridFunction(np.random.default_rng(6).uniform(-3, 3, 400))
    exact = exact_sat_ode_solution(f, 1.0)
    system = SystemSpec(ZERO, 1.0, FeedbackMap.sat())
    errs = [norm_l2(solve_mild(system, f, None, 1.0, dt, substep="rk4").final - exact) for dt in (1e-2, 5e-3, 2.5e-3)]
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 1.0


def test_tabulated_feedback_uses_rk4():
    sigma = FeedbackMap.tabulated([-1.0, 1.0], [-1.0, 1.0])  # identity on [-1, 1]
    traj = solve_mild(SystemSpec(ZERO, 1.0, sigma), const(0.5), None, 1.0, 1e-2)
    np.testing.assert_allclose(traj.final.values, 0.5 * math.exp(-1), rtol=1e-8)
    with pytest.raises(ValueError):
        solve_mild(SystemSpec(ZERO, 1.0, sigma), const(0.5), None, 1.0, 1e-2, substep="exact")


def test_matrix_system_with_matrix_b():
    A = GeneratorSpec.from_matrix([[-1.0, 0.0], [0.0, -2.0]])
    B = np.array([[1.0], [1.0]])
    system = SystemSpec(A, B, FeedbackMap.identity())
    x0 = FiniteVector([1.0, -1.0])
    traj = solve_mild(system, x0, None, 1.0, 1e-3)
    from scipy.linalg import expm

    expected = expm(np.array([[-2.0, -1.0], [-1.0, -3.0]])) @ x0.values
    np.testing.assert_allclose(traj.final.values, expected, atol=1e-6)


def test_disturbance_enters_through_feedback():
    # x' = -(x + d) with d = 1 settles at -1
    system = SystemSpec(ZERO, 1.0, FeedbackMap.identity())
    traj = solve_mild(system, const(0.0), Disturbance.constant(const(1.0)), 20.0, 1e-2)
    np.testing.assert_allclose(traj.final.values, -1.0, atol=1e-8)


def test_strang_falls_back_to_lie_on_odd_cells():
    f = random_profile(1, 100)
    system = SystemSpec(SHIFT, 1.0, FeedbackMap.sat())
    assert solve_mild(system, f, None, 0.1, 0.01).scheme == "lie"
    assert solve_mild(system, f, None, 0.1, 0.02).scheme == "strang"


def test_solver_input_validation():
    system = SystemSpec(SHIFT, 1.0, FeedbackMap.sat())
    with pytest.raises(ValueError):
        solve_mild(system, const(1.0, 8), None, 1.0, 0.1)
    with pytest.raises(ValueError):
        solve_mild(SystemSpec(ZERO), const(1.0), None, 1.0, 0.0)
    with pytest.raises(ValueError):
        solve_mild(SystemSpec(ZERO), const(1.0), Disturbance.piecewise([0, 0.333], [None, None]), 1.0, 0.1)
    with pytest.raises(ValueError):
        solve_mild(SystemSpec(ZERO), const(1.0), None, 1.0, 0.1, scheme="euler")


def test_misaligned_shift_allowed_when_not_strict():
    system = SystemSpec(SHIFT, 1.0, FeedbackMap.sat())
    with pytest.warns(UserWarning):
        traj = solve_mild(system, const(1.0, 8), None, 0.3, 0.1, strict=False)
    np.testing.assert_allclose(traj.final.values, math.exp(-0.3), rtol=1e-12)


def test_blowup_guard():
    system = SystemSpec(GeneratorSpec.scalar_diagonal(-50.0), 0.0, FeedbackMap.sat())
    with pytest.raises(BlowUpError):
        solve_mild(system, const(1.0), None, 1.0, 0.01)


def test_trajectory_is_immutable():
    traj = solve_mild(SystemSpec(ZERO, 1.0, FeedbackMap.sat()), const(2.0), None, 0.1, 0.05)
    with pytest.raises(ValueError):
        traj.times[0] = 1.0
    with pytest.raises(ValueError):
        Trajectory(np.array([0.1]), (const(1.0),), "lie", 0.1)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_nonlinear_contraction(seed):
    system = SystemSpec(SHIFT, 1.0, FeedbackMap.sat())
    x = solve_mild(system, random_profile(seed, 32, 4), None, 2.0, 1 / 16)
    y = solve_mild(system, random_profile(seed + 1, 32, 4), None, 2.0, 1 / 16)
    gaps = [(a - b).norm() for a, b in zip(x.states, y.states)]
    assert all(g1 <= g0 * (1 + 1e-12) for g0, g1 in zip(gaps, gaps[1:]))
    norms = x.norms()
    assert np.all(np.diff(norms) <= 1e-12)


# Picard

def test_picard_identity_feedback():
    system = SystemSpec(ZERO, 1.0, FeedbackMap.identity())
    x = picard_iterate(system, const(1.0), None, 0.1, 20, 1e-3)
    np.testing.assert_allclose(x.values, math.exp(-0.1), atol=1e-6)


def test_picard_zeroth_iterate_is_free_flow():
    system = SystemSpec(GeneratorSpec.scalar_diagonal(1.0), 1.0, FeedbackMap.sat())
    x = picard_iterate(system, const(3.0), None, 0.2, 0, 1e-2)
    np.testing.assert_allclose(x.values, 3.0 * math.exp(-0.2), rtol=1e-14)


def test_picard_sat_matches_closed_form():
    system = SystemSpec(ZERO, 1.0, FeedbackMap.sat())
    x = picard_iterate(system, const(2.0), None, 0.1, 10, 1e-3)
    np.testing.assert_allclose(x.values, 1.9, atol=1e-4)


def test_picard_and_solver_agree_at_first_order():
    system = SystemSpec(GeneratorSpec.scalar_diagonal(1.0), 1.0, FeedbackMap.sat())
    x0 = random_profile(3, 64, 2)
    reference = picard_iterate(system, x0, None, 0.25, 30, 1e-4)
    gaps = [norm_l2(solve_mild(system, x0, None, 0.25, dt, scheme="lie").final - reference) for dt in (0.05, 0.025, 0.0125)]
    assert gaps[0] > 1e-6
    assert all(b <= 0.5 * a for a, b in zip(gaps, gaps[1:]))


def test_picard_divergence_detected():
    system = SystemSpec(ZERO, 5.0, FeedbackMap.identity())
    with pytest.raises(PicardDivergenceError):
        picard_iterate(system, const(1.0), None, 2.0, 50, 1e-2)


# Gronwall

def test_gronwall_identical_trajectories():
    system = SystemSpec(ZERO, 1.0, FeedbackMap.sat())
    tx = solve_mild(system, const(2.0), None, 1.0, 0.01)
    rep = gronwall_check(tx, tx, None, None, 1.0, 1.0)
    assert rep.passed and rep.violations == 0
    assert all(r.lhs == 0 and r.rhs == 0 for r in rep.rows)


def test_gronwall_perturbed_initial_state():
    system = SystemSpec(ZERO, 1.0, FeedbackMap.sat())
    tx = solve_mild(system, const(2.0), None, 1.0, 0.01)
    ty = solve_mild(system, const(2.1), None, 1.0, 0.01)
    rep = gronwall_check(tx, ty, None, None, 1.0, 1.0, system=system)
    assert rep.passed
    assert rep.rows[-1].lhs <= 0.1 * math.e
    assert rep.radius == pytest.approx(2.1)


def test_gronwall_perturbed_input():
    system = SystemSpec(ZERO, 1.0, FeedbackMap.sat())
    d2 = Disturbance.constant(const(0.05))
    tx = solve_mild(system, const(2.0), None, 1.0, 0.01)
    ty = solve_mild(system, const(2.1), d2, 1.0, 0.01)
    rep = gronwall_check(tx, ty, None, d2, 1.0, 1.0)
    assert rep.passed and rep.violations == 0
    for r in rep.rows:
        assert r.rhs == pytest.approx((0.1 + 0.05 * r.t) * math.exp(r.t), rel=1e-9)


def test_gronwall_needs_matching_grids():
    system = SystemSpec(ZERO, 1.0, FeedbackMap.sat())
    with pytest.raises(ValueError):
        gronwall_check(
            solve_mild(system, const(1.0), None, 1.0, 0.1),
            solve_mild(system, const(1.0), None, 1.0, 0.05),
            None, None, 1.0, 1.0,
        )
