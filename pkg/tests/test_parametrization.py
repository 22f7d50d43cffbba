import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from joint_limit_control.dynamics import JointState, coriolis_matrix, dynamics_terms, mass_matrix
from joint_limit_control.exceptions import OutOfFeasibleSpace
from joint_limit_control.parametrization import (
    JointLimits,
    XiState,
    jacobian,
    jacobian_diagonal,
    jacobian_dot,
    q_of_xi,
    to_xi_dynamics,
    to_xi_torque,
    xi_of_q,
    xi_state_of,
)


def _xi_terms(model, limits, xi, xi_dot):
    J = jacobian_diagonal(limits, xi)
    state = JointState(q_of_xi(limits, xi), J * xi_dot)
    return to_xi_dynamics(dynamics_terms(model, state), limits, XiState(xi, xi_dot))


# ============================================================================
# Map
# ============================================================================

def test_limits_derived_quantities(limits):
    assert_allclose(np.rad2deg(limits.q0), [27.5, -50.0])
    assert_allclose(np.rad2deg(limits.half_range), [57.5, 50.0])
    assert_allclose(limits.delta, np.diag(limits.half_range))


@pytest.mark.parametrize("q_min,q_max", [([0.0, 0.0], [1.0, 0.0]), ([0.5], [0.2]), ([0.0, 0.0], [1.0])])
def test_limits_reject_empty_ranges(q_min, q_max):
    with pytest.raises(ValueError):
        JointLimits(q_min, q_max)


def test_center_maps_to_origin(limits):
    assert_allclose(q_of_xi(limits, np.zeros(2)), limits.q0, atol=0)
    assert_allclose(xi_of_q(limits, limits.q0), np.zeros(2), atol=1e-15)


def test_hip_unit_xi(limits):
    # q_min + δ(1 + tanh 1) and δ / cosh²1 for the hip
    expected_q = limits.q_min[0] + limits.half_range[0] * (1.0 + np.tanh(1.0))
    expected_J = limits.half_range[0] / np.cosh(1.0) ** 2
    assert q_of_xi(limits, [1.0, 0.0])[0] == pytest.approx(expected_q, rel=1e-12)
    assert jacobian_diagonal(limits, [1.0, 0.0])[0] == pytest.approx(expected_J, rel=1e-12)
    assert expected_q == pytest.approx(1.24427, abs=1e-5)
    assert expected_J == pytest.approx(0.42147, abs=1e-5)


def test_sinusoid_peak_maps_to_known_xi(limits):
    q = limits.q0 + limits.half_range / 1.1
    assert_allclose(xi_of_q(limits, q), [1.5223, 1.5223], atol=1e-4)


@pytest.mark.parametrize("xi", [50.0, -50.0])
def test_large_xi_stays_strictly_inside(limits, xi):
    q = q_of_xi(limits, [xi, xi])
    assert np.all(q > limits.q_min) and np.all(q < limits.q_max)
    bound = limits.q_max if xi > 0 else limits.q_min
    assert np.all(np.abs(q - bound) < 1e-12)


def test_range_invariance_million_samples(limits, rng):
    xi = rng.normal(0.0, 30.0, size=(500_000, 2))
    q = q_of_xi(limits, xi)
    assert q.shape == xi.shape
    assert np.all(q > limits.q_min) and np.all(q < limits.q_max)


def test_round_trip_in_joint_space(limits, rng):
    xi = rng.uniform(-15.0, 15.0, size=(1000, 2))
    q = q_of_xi(limits, xi)
    back = q_of_xi(limits, xi_of_q(limits, q, boundary_tol=0.0))
    assert np.max(np.abs(back - q)) <= 1e-10


def test_round_trip_in_xi_moderate_range(limits, rng):
    xi = rng.uniform(-5.0, 5.0, size=(1000, 2))
    assert_allclose(xi_of_q(limits, q_of_xi(limits, xi)), xi, atol=1e-9)


@pytest.mark.parametrize("offset", [0.0, 1e-10, -0.1])
def test_inverse_rejects_boundary_and_outside(limits, offset):
    q = np.array([limits.q_max[0] - offset, limits.q0[1]])
    with pytest.raises(OutOfFeasibleSpace) as excinfo:
        xi_of_q(limits, q)
    assert list(excinfo.value.joints) == [0]


def test_inverse_reports_every_offending_joint(limits):
    q = np.array([limits.q_min[0] - 0.2, limits.q_max[1] + 0.2])
    with pytest.raises(OutOfFeasibleSpace) as excinfo:
        xi_of_q(limits, q)
    assert list(excinfo.value.joints) == [0, 1]


def test_inverse_rejects_nan(limits):
    with pytest.raises(OutOfFeasibleSpace):
        xi_of_q(limits, [math.nan, 0.0])


def test_inverse_saturates(limits):
    q = q_of_xi(limits, [3.0, -3.0])
    assert_allclose(xi_of_q(limits, q, xi_saturation=2.0), [2.0, -2.0])


def test_inverse_broadcasts(limits, rng):
    xi = rng.uniform(-2.0, 2.0, size=(4, 3, 2))
    assert xi_of_q(limits, q_of_xi(limits, xi)).shape == (4, 3, 2)


# ============================================================================
# Jacobians
# ============================================================================

def test_jacobian_at_center_is_half_range(limits):
    assert_allclose(jacobian(limits, np.zeros(2)), limits.delta)


def test_jacobian_matches_finite_difference(limits, rng):
    h = 1e-6
    for xi in rng.uniform(-3.0, 3.0, size=(200, 2)):
        fd = (q_of_xi(limits, xi + h) - q_of_xi(limits, xi - h)) / (2 * h)
        assert_allclose(jacobian_diagonal(limits, xi), fd, rtol=1e-6)


def test_jacobian_dot_vanishes_at_rest_or_center(limits, rng):
    xi = rng.uniform(-3.0, 3.0, 2)
    assert_allclose(jacobian_dot(limits, xi, np.zeros(2)), np.zeros((2, 2)), atol=0)
    assert_allclose(jacobian_dot(limits, np.zeros(2), rng.normal(size=2)), np.zeros((2, 2)), atol=0)


def test_acceleration_chain_rule(limits, rng):
    h = 1e-4
    for _ in range(50):
        xi0 = rng.uniform(-2.0, 2.0, 2)
        xi_dot = rng.normal(0.0, 1.0, 2)
        xi_ddot = rng.normal(0.0, 1.0, 2)

        def q_at(t):
            return q_of_xi(limits, xi0 + xi_dot * t + 0.5 * xi_ddot * t ** 2)

        fd = (q_at(h) - 2.0 * q_at(0.0) + q_at(-h)) / h ** 2
        expected = jacobian(limits, xi0) @ xi_ddot + jacobian_dot(limits, xi0, xi_dot) @ xi_dot
        assert_allclose(fd, expected, rtol=1e-5, atol=1e-6)


def test_xi_state_velocity(limits):
    state = JointState(q_of_xi(limits, [0.5, -1.0]), [0.2, -0.1])
    xs = xi_state_of(limits, state)
    assert_allclose(xs.xi, [0.5, -1.0], atol=1e-12)
    assert_allclose(jacobian_diagonal(limits, xs.xi) * xs.xi_dot, state.q_dot, atol=1e-15)


def test_xi_state_normalises_inputs():
    xs = XiState([0.5, -1.0], (0.2, 0.1))
    assert xs.xi.dtype == float and xs.xi.shape == (2,)
    assert xs.xi_dot.shape == (2,)


@pytest.mark.parametrize(
    "xi,xi_dot",
    [
        ([0.0, 0.0], [0.0]),
        ([0.0, 0.0, 0.0], [0.0, 0.0]),
        ([math.nan, 0.0], [0.0, 0.0]),
        ([0.0, 0.0], [math.inf, 0.0]),
    ],
)
def test_xi_state_rejects_bad_input(xi, xi_dot):
    with pytest.raises(ValueError):
        XiState(xi, xi_dot)


# ============================================================================
# Dynamics in ξ
# ============================================================================

def test_xi_inertia_at_center(desk, limits):
    terms = _xi_terms(desk, limits, np.zeros(2), np.zeros(2))
    d = limits.delta
    assert_allclose(terms.M_xi, d @ mass_matrix(desk, limits.q0) @ d, rtol=1e-14)


def test_xi_inertia_vanishes_near_limits(desk, limits):
    xi = np.array([10.0, 10.0])
    terms = _xi_terms(desk, limits, xi, np.zeros(2))
    d = limits.delta
    reference = d @ mass_matrix(desk, q_of_xi(limits, xi)) @ d
    assert np.all(np.abs(terms.M_xi) <= 1e-7 * np.abs(reference))


def test_xi_inertia_positive_definite(desk, limits, rng):
    for xi in rng.uniform(-3.0, 3.0, size=(500, 2)):
        M_xi = _xi_terms(desk, limits, xi, np.zeros(2)).M_xi
        assert np.max(np.abs(M_xi - M_xi.T)) <= 1e-12 * np.max(np.abs(M_xi))
        assert np.linalg.eigvalsh(M_xi).min() > 0


def test_xi_skew_symmetry(desk, limits, rng):
    h = 1e-6
    for _ in range(500):
        xi = rng.uniform(-3.0, 3.0, 2)
        xi_dot = rng.normal(0.0, 1.0, 2)
        v = rng.normal(0.0, 1.0, 2)
        M_plus = _xi_terms(desk, limits, xi + h * xi_dot, np.zeros(2)).M_xi
        M_minus = _xi_terms(desk, limits, xi - h * xi_dot, np.zeros(2)).M_xi
        N = (M_plus - M_minus) / (2 * h) - 2.0 * _xi_terms(desk, limits, xi, xi_dot).C_xi
        assert abs(v @ N @ v) <= 1e-8 * (v @ v) * max(np.linalg.norm(xi_dot), 1.0)


def test_xi_skew_symmetry_with_injected_coriolis_breaks(desk, limits):
    xi = np.array([0.4, -0.8])
    xi_dot = np.array([1.0, -0.5])
    J = jacobian_diagonal(limits, xi)
    q = q_of_xi(limits, xi)
    C_bad = -coriolis_matrix(desk, q, J * xi_dot)
    terms = dynamics_terms(desk, JointState(q, J * xi_dot))
    good = to_xi_dynamics(terms, limits, XiState(xi, xi_dot))
    bad = to_xi_dynamics(type(terms)(terms.M, C_bad, terms.G), limits, XiState(xi, xi_dot))
    N_good = good.C_xi + good.C_xi.T
    N_bad = bad.C_xi + bad.C_xi.T
    # Ṁ_ξ = C_ξ + C_ξᵀ only for the Christoffel choice
    assert np.max(np.abs(N_good - N_bad)) > 1e-3


def test_xi_torque_is_jacobian_transpose(limits):
    xi = np.array([0.3, -1.2])
    tau = np.array([4.0, -2.0])
    assert_allclose(to_xi_torque(limits, xi, tau), jacobian(limits, xi).T @ tau)
