import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from joint_limit_control.dynamics import (
    JointState,
    ManipulatorModel,
    coriolis_matrix,
    dynamics_terms,
    ee_jacobian,
    forward_dynamics,
    forward_kinematics,
    gravity_vector,
    kinetic_energy,
    mass_matrix,
    mass_matrix_derivatives,
    potential_energy,
    solve_stacked_2x2,
    stacked_coriolis_matrix,
    stacked_gravity_vector,
    stacked_mass_matrix,
)


def _random_q(rng, n, count):
    return rng.uniform(-math.pi, math.pi, size=(count, n))


# ============================================================================
# Point-mass arm, values checked by hand
# ============================================================================

def test_mass_matrix_point_mass_extended(point_mass):
    assert_allclose(mass_matrix(point_mass, [0.0, 0.0]), [[5.0, 2.0], [2.0, 1.0]], atol=1e-12)


def test_mass_matrix_point_mass_knee_bent(point_mass):
    assert_allclose(mass_matrix(point_mass, [0.0, math.pi / 2]), [[3.0, 1.0], [1.0, 1.0]], atol=1e-12)


def test_coriolis_point_mass_knee_bent(point_mass):
    q_dot = np.array([1.0, 0.0])
    C = coriolis_matrix(point_mass, [0.0, math.pi / 2], q_dot)
    assert_allclose(C @ q_dot, [0.0, 1.0], atol=1e-12)


def test_gravity_point_mass(point_mass):
    assert_allclose(gravity_vector(point_mass, [0.0, 0.0]), [29.43, 9.81], atol=1e-12)
    # hanging straight down
    assert_allclose(gravity_vector(point_mass, [-math.pi / 2, 0.0]), [0.0, 0.0], atol=1e-12)


def test_ee_jacobian_unit_links(point_mass):
    assert_allclose(ee_jacobian(point_mass, [0.0, 0.0]), [[0.0, 0.0], [2.0, 1.0]], atol=1e-12)


def test_coriolis_vanishes_at_rest(desk, rng):
    for q in _random_q(rng, 2, 20):
        assert_allclose(coriolis_matrix(desk, q, np.zeros(2)), np.zeros((2, 2)), atol=0)


# ============================================================================
# Structural properties
# ============================================================================

def test_mass_matrix_symmetric_positive_definite_bounded(desk, rng):
    eigs = []
    for q in _random_q(rng, 2, 1000):
        M = mass_matrix(desk, q)
        assert np.max(np.abs(M - M.T)) <= 1e-12 * np.max(np.abs(M))
        eigs.append(np.linalg.eigvalsh(M))
    eigs = np.array(eigs)
    assert eigs.min() > 0
    # uniformly bounded for a revolute arm
    assert eigs.max() < 1.0


def test_skew_symmetry_finite_difference(desk, rng):
    h = 1e-6
    for _ in range(1000):
        q = rng.uniform(-math.pi, math.pi, 2)
        q_dot = rng.normal(0.0, 1.0, 2)
        v = rng.normal(0.0, 1.0, 2)
        M_dot = (mass_matrix(desk, q + h * q_dot) - mass_matrix(desk, q - h * q_dot)) / (2 * h)
        N = M_dot - 2.0 * coriolis_matrix(desk, q, q_dot)
        assert abs(v @ N @ v) <= 1e-8 * (v @ v) * max(np.linalg.norm(q_dot), 1.0)


def test_skew_symmetry_three_link_chain(three_link, rng):
    for _ in range(200):
        q = rng.uniform(-math.pi, math.pi, 3)
        q_dot = rng.normal(0.0, 1.0, 3)
        M_dot = np.tensordot(mass_matrix_derivatives(three_link, q), q_dot, axes=([0], [0]))
        N = M_dot - 2.0 * coriolis_matrix(three_link, q, q_dot)
        assert_allclose(N, -N.T, atol=1e-12)


def test_closed_form_matches_chain(desk, rng):
    for q in _random_q(rng, 2, 200):
        q_dot = rng.normal(0.0, 1.0, 2)
        assert_allclose(mass_matrix(desk, q), mass_matrix(desk, q, closed_form=False), atol=1e-10)
        assert_allclose(
            coriolis_matrix(desk, q, q_dot), coriolis_matrix(desk, q, q_dot, closed_form=False), atol=1e-10
        )
        assert_allclose(gravity_vector(desk, q), gravity_vector(desk, q, closed_form=False), atol=1e-10)
        assert_allclose(ee_jacobian(desk, q), ee_jacobian(desk, q, closed_form=False), atol=1e-10)


@pytest.mark.parametrize("model_name", ["desk", "three_link"])
def test_gravity_is_potential_gradient(model_name, request, rng):
    model = request.getfixturevalue(model_name)
    n = model.n_links
    h = 1e-6
    for q in _random_q(rng, n, 100):
        fd = np.array([
            (potential_energy(model, q + h * e) - potential_energy(model, q - h * e)) / (2 * h)
            for e in np.eye(n)
        ])
        G = gravity_vector(model, q)
        assert np.max(np.abs(fd - G)) <= 1e-6 * max(np.max(np.abs(G)), 1.0)


def test_ee_jacobian_matches_kinematics(desk, rng):
    h = 1e-6
    for q in _random_q(rng, 2, 50):
        fd = np.column_stack([
            (forward_kinematics(desk, q + h * e) - forward_kinematics(desk, q - h * e)) / (2 * h)
            for e in np.eye(2)
        ])
        assert_allclose(ee_jacobian(desk, q), fd, atol=1e-8)


# ============================================================================
# Forward dynamics
# ============================================================================

def test_forward_dynamics_satisfies_equation_of_motion(desk, rng):
    for _ in range(50):
        state = JointState(rng.uniform(-math.pi, math.pi, 2), rng.normal(0.0, 1.0, 2))
        tau = rng.normal(0.0, 5.0, 2)
        q_ddot = forward_dynamics(desk, state, tau)
        terms = dynamics_terms(desk, state)
        assert_allclose(terms.M @ q_ddot + terms.C @ state.q_dot + terms.G, tau, atol=1e-10)


def test_forward_dynamics_rest_without_gravity(desk):
    state = JointState([0.3, -0.7], [0.0, 0.0])
    q_ddot = forward_dynamics(desk.with_gravity(0.0), state, np.zeros(2))
    assert np.array_equal(q_ddot, np.zeros(2))


def test_friction_opposes_motion(desk):
    damped = ManipulatorModel(
        link_mass=desk.link_mass,
        link_length=desk.link_length,
        com_offset=desk.com_offset,
        link_inertia=desk.link_inertia,
        gravity=0.0,
        friction=[0.5, 0.5],
    )
    state = JointState([0.0, -0.5], [1.0, 0.0])
    free = forward_dynamics(desk.with_gravity(0.0), state, np.zeros(2))
    slowed = forward_dynamics(damped, state, np.zeros(2))
    M = mass_matrix(desk, state.q)
    # the difference is exactly M⁻¹(−b q̇)
    assert_allclose(M @ (slowed - free), [-0.5, 0.0], atol=1e-12)


def test_kinetic_energy_point_mass(point_mass):
    assert kinetic_energy(point_mass, [0.0, 0.0], [1.0, 0.0]) == pytest.approx(2.5)


# ============================================================================
# Validation
# ============================================================================

@pytest.mark.parametrize(
    "overrides",
    [
        {"link_mass": [0.0, 1.0]},
        {"link_length": [0.4, -0.4]},
        {"com_offset": [0.5, 0.2]},
        {"com_offset": [0.0, 0.2]},
        {"link_inertia": [-0.1, 0.0]},
        {"friction": [0.1, -0.1]},
        {"link_mass": [1.0, 1.0, 1.0]},
        {"gravity": float("nan")},
    ],
)
def test_model_rejects_invalid_parameters(overrides):
    params = dict(
        link_mass=[2.0, 1.0],
        link_length=[0.4, 0.4],
        com_offset=[0.2, 0.2],
        link_inertia=[0.03, 0.01],
        gravity=9.81,
    )
    params.update(overrides)
    with pytest.raises(ValueError):
        ManipulatorModel(**params)


def test_model_arrays_are_read_only(desk):
    with pytest.raises(ValueError):
        desk.link_mass[0] = 5.0


def test_state_length_mismatch():
    with pytest.raises(ValueError):
        JointState([0.0, 0.0], [0.0])


# ============================================================================
# Stacked closed form
# ============================================================================

def test_stacked_terms_match_single_state(desk, rng):
    q = _random_q(rng, 2, 64)
    q_dot = rng.normal(0.0, 2.0, size=(64, 2))
    M = stacked_mass_matrix(desk, q)
    C = stacked_coriolis_matrix(desk, q, q_dot)
    G = stacked_gravity_vector(desk, q)
    for b in range(64):
        assert_allclose(M[b], mass_matrix(desk, q[b]), rtol=1e-14, atol=1e-15)
        assert_allclose(C[b], coriolis_matrix(desk, q[b], q_dot[b]), rtol=1e-14, atol=1e-15)
        assert_allclose(G[b], gravity_vector(desk, q[b]), rtol=1e-14, atol=1e-14)


def test_stacked_solve_matches_linalg(desk, rng):
    q = _random_q(rng, 2, 32)
    M = stacked_mass_matrix(desk, q)
    rhs = rng.normal(size=(32, 2))
    x = solve_stacked_2x2(M, rhs)
    for b in range(32):
        assert_allclose(x[b], np.linalg.solve(M[b], rhs[b]), rtol=1e-10, atol=1e-12)


def test_stacked_solve_keeps_bad_rows_local():
    M = np.array([np.eye(2), np.full((2, 2), np.nan)])
    with np.errstate(invalid="ignore"):
        x = solve_stacked_2x2(M, np.ones((2, 2)))
    assert_allclose(x[0], [1.0, 1.0])
    assert np.all(np.isnan(x[1]))


def test_stacked_forms_need_two_links(three_link):
    with pytest.raises(ValueError):
        stacked_mass_matrix(three_link, np.zeros((4, 3)))
