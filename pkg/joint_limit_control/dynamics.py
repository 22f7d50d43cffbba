"""
Lagrangian dynamics of an n-link planar serial manipulator.

    M(q) q̈ + C(q, q̇) q̇ + G(q) = τ

Joint 1 is measured from the +x axis of the base frame, every following joint
relative to the previous link. Gravity acts along -y.

Two evaluation paths are provided:
- a chain assembly valid for any n (COM Jacobians and their analytic
  derivatives, Christoffel symbols of the first kind), and
- the usual closed form for n = 2, used by default for two links.
Both must agree to round-off; `tests/test_dynamics.py` and the selftest check it.
The `stacked_*` variants evaluate the two-link closed form for a whole stack
of states at once (leading run axis) and back the lockstep batch integrator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np


DEFAULT_GRAVITY = 9.81


# ============================================================================
# Model types
# ============================================================================

@dataclass(frozen=True, eq=False)
class ManipulatorModel:
    """
    Physical parameters of an n-link planar arm.

    Attributes:
        link_mass: Link masses [kg]
        link_length: Link lengths [m]
        com_offset: Distance from joint i to the COM of link i [m], 0 < c_i <= l_i
        link_inertia: Rotational inertia about each link's COM [kg·m²]
        gravity: Gravitational acceleration along -y [m/s²]
        friction: Viscous joint friction [N·m·s/rad], zero unless set
    """
    link_mass: np.ndarray
    link_length: np.ndarray
    com_offset: np.ndarray
    link_inertia: np.ndarray
    gravity: float = DEFAULT_GRAVITY
    friction: np.ndarray = field(default=None)

    def __post_init__(self):
        arrays = {}
        for name in ("link_mass", "link_length", "com_offset", "link_inertia"):
            arrays[name] = np.atleast_1d(np.array(getattr(self, name), dtype=float))
        n = arrays["link_mass"].shape[0]
        friction = np.zeros(n) if self.friction is None else np.atleast_1d(np.array(self.friction, dtype=float))
        arrays["friction"] = friction

        for name, values in arrays.items():
            if values.ndim != 1 or values.shape[0] != n:
                raise ValueError(f"{name} must have one entry per link ({n}), got shape {values.shape}")
            if not np.all(np.isfinite(values)):
                raise ValueError(f"{name} must be finite")
        if n == 0:
            raise ValueError("a manipulator needs at least one link")
        if np.any(arrays["link_mass"] <= 0) or np.any(arrays["link_length"] <= 0):
            raise ValueError("link masses and lengths must be strictly positive")
        if np.any(arrays["com_offset"] <= 0) or np.any(arrays["com_offset"] > arrays["link_length"]):
            raise ValueError("com_offset must satisfy 0 < com_offset <= link_length")
        if np.any(arrays["link_inertia"] < 0):
            raise ValueError("link inertias must be nonnegative")
        if np.any(arrays["friction"] < 0):
            raise ValueError("friction coefficients must be nonnegative")
        if not math.isfinite(self.gravity):
            raise ValueError("gravity must be finite")

        for name, values in arrays.items():
            values.setflags(write=False)
            object.__setattr__(self, name, values)
        object.__setattr__(self, "gravity", float(self.gravity))

    @property
    def n_links(self) -> int:
        return int(self.link_mass.shape[0])

    def with_gravity(self, gravity: float) -> "ManipulatorModel":
        """Copy of this model with another gravity value."""
        return ManipulatorModel(
            link_mass=self.link_mass,
            link_length=self.link_length,
            com_offset=self.com_offset,
            link_inertia=self.link_inertia,
            gravity=gravity,
            friction=self.friction,
        )


@dataclass(frozen=True, eq=False)
class JointState:
    """Joint angles [rad] and velocities [rad/s]."""
    q: np.ndarray
    q_dot: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(-1)
        q_dot = np.asarray(self.q_dot, dtype=float).reshape(-1)
        if q.shape != q_dot.shape:
            raise ValueError(f"q and q_dot must have the same length ({q.shape} vs {q_dot.shape})")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "q_dot", q_dot)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.q_dot)))


@dataclass(frozen=True, eq=False)
class DynamicsTerms:
    """The triple (M, C, G) evaluated at one state."""
    M: np.ndarray
    C: np.ndarray
    G: np.ndarray


def desk_model() -> ManipulatorModel:
    """
    Canonical two-link plant used by every shipped experiment.

    Uniform rods: m = [2.0, 1.0] kg, l = [0.4, 0.4] m, COM at mid-length,
    inertia m·l²/12, g = 9.81 m/s².
    """
    mass = np.array([2.0, 1.0])
    length = np.array([0.4, 0.4])
    return ManipulatorModel(
        link_mass=mass,
        link_length=length,
        com_offset=length / 2.0,
        link_inertia=mass * length ** 2 / 12.0,
        gravity=DEFAULT_GRAVITY,
    )


# ============================================================================
# Chain assembly (any n)
# ============================================================================

def _absolute_angles(q: np.ndarray) -> np.ndarray:
    return np.cumsum(np.asarray(q, dtype=float))


def _com_jacobians(model: ManipulatorModel, q: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Linear COM Jacobians, their derivatives and the angular Jacobians.

    Returns:
        jv: (n, 2, n), jv[i] = ∂p_ci/∂q
        djv: (n, n, 2, n), djv[m, i] = ∂jv[i]/∂q_m
        jw: (n, n), jw[i, k] = 1 for k <= i
    """
    n = model.n_links
    phi = _absolute_angles(q)
    cos_phi, sin_phi = np.cos(phi), np.sin(phi)
    perp = np.stack([-sin_phi, cos_phi], axis=1)        # ∂[cos, sin]/∂phi
    perp_dot = np.stack([-cos_phi, -sin_phi], axis=1)   # ∂perp/∂phi

    jv = np.zeros((n, 2, n))
    djv = np.zeros((n, n, 2, n))
    for i in range(n):
        for k in range(i + 1):
            for j in range(k, i):
                jv[i, :, k] += model.link_length[j] * perp[j]
                djv[: j + 1, i, :, k] += model.link_length[j] * perp_dot[j]
            jv[i, :, k] += model.com_offset[i] * perp[i]
            djv[: i + 1, i, :, k] += model.com_offset[i] * perp_dot[i]
    jw = np.tril(np.ones((n, n)))
    return jv, djv, jw


def _chain_mass_matrix(model: ManipulatorModel, q: np.ndarray) -> np.ndarray:
    jv, _, jw = _com_jacobians(model, q)
    M = np.einsum("i,iak,ial->kl", model.link_mass, jv, jv)
    M += np.einsum("i,ik,il->kl", model.link_inertia, jw, jw)
    return M


def mass_matrix_derivatives(model: ManipulatorModel, q: np.ndarray) -> np.ndarray:
    """
    Partial derivatives of the inertia matrix.

    Returns:
        (n, n, n) array, entry [m] is ∂M/∂q_m
    """
    jv, djv, _ = _com_jacobians(model, q)
    half = np.einsum("i,miak,ial->mkl", model.link_mass, djv, jv)
    return half + np.transpose(half, (0, 2, 1))


def christoffel_coriolis(dM: np.ndarray, q_dot: np.ndarray) -> np.ndarray:
    """
    Coriolis matrix from Christoffel symbols of the first kind.

        C_ij = Σ_k ½ (∂M_ij/∂q_k + ∂M_ik/∂q_j − ∂M_jk/∂q_i) q̇_k

    With this choice Ṁ − 2C is skew-symmetric for any symmetric dM.
    """
    q_dot = np.asarray(q_dot, dtype=float)
    return 0.5 * (
        np.einsum("kij,k->ij", dM, q_dot)
        + np.einsum("jik,k->ij", dM, q_dot)
        - np.einsum("ijk,k->ij", dM, q_dot)
    )


def _chain_gravity(model: ManipulatorModel, q: np.ndarray) -> np.ndarray:
    jv, _, _ = _com_jacobians(model, q)
    return model.gravity * np.einsum("i,ik->k", model.link_mass, jv[:, 1, :])


def _chain_ee_jacobian(model: ManipulatorModel, q: np.ndarray) -> np.ndarray:
    phi = _absolute_angles(q)
    arms = model.link_length[:, None] * np.stack([-np.sin(phi), np.cos(phi)], axis=1)
    # column k collects every link at or after joint k
    return np.cumsum(arms[::-1], axis=0)[::-1].T.copy()


# ============================================================================
# Closed form (n = 2)
# ============================================================================

def _two_link_mass_matrix(model: ManipulatorModel, q: np.ndarray) -> np.ndarray:
    m1, m2 = model.link_mass
    l1 = model.link_length[0]
    c1, c2 = model.com_offset
    i1, i2 = model.link_inertia
    cos2 = math.cos(q[1])
    m22 = m2 * c2 ** 2 + i2
    m12 = m22 + m2 * l1 * c2 * cos2
    m11 = m1 * c1 ** 2 + i1 + m2 * (l1 ** 2 + c2 ** 2 + 2.0 * l1 * c2 * cos2) + i2
    return np.array([[m11, m12], [m12, m22]])


def _two_link_coriolis(model: ManipulatorModel, q: np.ndarray, q_dot: np.ndarray) -> np.ndarray:
    h = -model.link_mass[1] * model.link_length[0] * model.com_offset[1] * math.sin(q[1])
    qd1, qd2 = q_dot
    return np.array([[h * qd2, h * (qd1 + qd2)], [-h * qd1, 0.0]])


def _two_link_gravity(model: ManipulatorModel, q: np.ndarray) -> np.ndarray:
    m1, m2 = model.link_mass
    l1 = model.link_length[0]
    c1, c2 = model.com_offset
    g = model.gravity
    cos12 = math.cos(q[0] + q[1])
    g2 = m2 * c2 * g * cos12
    g1 = (m1 * c1 + m2 * l1) * g * math.cos(q[0]) + g2
    return np.array([g1, g2])


def _two_link_ee_jacobian(model: ManipulatorModel, q: np.ndarray) -> np.ndarray:
    l1, l2 = model.link_length
    s1, c1 = math.sin(q[0]), math.cos(q[0])
    s12, c12 = math.sin(q[0] + q[1]), math.cos(q[0] + q[1])
    return np.array([
        [-l1 * s1 - l2 * s12, -l2 * s12],
        [l1 * c1 + l2 * c12, l2 * c12],
    ])


# ============================================================================
# Closed form (n = 2), stacked states
# ============================================================================

def _require_two_links(model: ManipulatorModel) -> None:
    if model.n_links != 2:
        raise ValueError(f"stacked closed forms need a two-link model (got {model.n_links} links)")


def stacked_mass_matrix(model: ManipulatorModel, q: np.ndarray) -> np.ndarray:
    """M(q) for a stack of two-link states, q of shape (B, 2); returns (B, 2, 2)."""
    _require_two_links(model)
    q = np.asarray(q, dtype=float)
    m1, m2 = model.link_mass
    l1 = model.link_length[0]
    c1, c2 = model.com_offset
    i1, i2 = model.link_inertia
    cos2 = np.cos(q[:, 1])
    M = np.empty(q.shape[:1] + (2, 2))
    M[:, 1, 1] = m2 * c2 ** 2 + i2
    M[:, 0, 1] = M[:, 1, 0] = m2 * c2 ** 2 + i2 + m2 * l1 * c2 * cos2
    M[:, 0, 0] = m1 * c1 ** 2 + i1 + m2 * (l1 ** 2 + c2 ** 2 + 2.0 * l1 * c2 * cos2) + i2
    return M


def stacked_coriolis_matrix(model: ManipulatorModel, q: np.ndarray, q_dot: np.ndarray) -> np.ndarray:
    """Christoffel C(q, q̇) for stacked two-link states; returns (B, 2, 2)."""
    _require_two_links(model)
    q = np.asarray(q, dtype=float)
    q_dot = np.asarray(q_dot, dtype=float)
    h = -model.link_mass[1] * model.link_length[0] * model.com_offset[1] * np.sin(q[:, 1])
    C = np.zeros(q.shape[:1] + (2, 2))
    C[:, 0, 0] = h * q_dot[:, 1]
    C[:, 0, 1] = h * (q_dot[:, 0] + q_dot[:, 1])
    C[:, 1, 0] = -h * q_dot[:, 0]
    return C


def stacked_gravity_vector(model: ManipulatorModel, q: np.ndarray) -> np.ndarray:
    """G(q) for stacked two-link states; returns (B, 2)."""
    _require_two_links(model)
    q = np.asarray(q, dtype=float)
    m1, m2 = model.link_mass
    l1 = model.link_length[0]
    c1, c2 = model.com_offset
    g = model.gravity
    g2 = m2 * c2 * g * np.cos(q[:, 0] + q[:, 1])
    g1 = (m1 * c1 + m2 * l1) * g * np.cos(q[:, 0]) + g2
    return np.stack([g1, g2], axis=1)


def solve_stacked_2x2(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """
    Solve M x = rhs row by row for M of shape (B, 2, 2).

    Cramer's rule never raises: a singular or non-finite row yields inf/NaN
    in that row only.
    """
    det = M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] * M[:, 1, 0]
    x1 = (M[:, 1, 1] * rhs[:, 0] - M[:, 0, 1] * rhs[:, 1]) / det
    x2 = (M[:, 0, 0] * rhs[:, 1] - M[:, 1, 0] * rhs[:, 0]) / det
    return np.stack([x1, x2], axis=1)


# ============================================================================
# Public operations
# ============================================================================

def mass_matrix(model: ManipulatorModel, q: np.ndarray, closed_form: bool = True) -> np.ndarray:
    """
    Inertia matrix M(q), symmetric positive definite.

    Args:
        model: Manipulator parameters
        q: Joint angles [rad]
        closed_form: Use the two-link closed form when n = 2

    Returns:
        (n, n) inertia matrix [kg·m²]
    """
    q = np.asarray(q, dtype=float)
    if closed_form and model.n_links == 2:
        return _two_link_mass_matrix(model, q)
    return _chain_mass_matrix(model, q)


def coriolis_matrix(model: ManipulatorModel, q: np.ndarray, q_dot: np.ndarray, closed_form: bool = True) -> np.ndarray:
    """
    Coriolis matrix C(q, q̇) in Christoffel form, so C·q̇ is the
    Coriolis/centrifugal generalized force and Ṁ − 2C is skew-symmetric.
    """
    q = np.asarray(q, dtype=float)
    q_dot = np.asarray(q_dot, dtype=float)
    if closed_form and model.n_links == 2:
        return _two_link_coriolis(model, q, q_dot)
    return christoffel_coriolis(mass_matrix_derivatives(model, q), q_dot)


def gravity_vector(model: ManipulatorModel, q: np.ndarray, closed_form: bool = True) -> np.ndarray:
    """Gravity torques G(q) = ∂P/∂q [N·m]."""
    q = np.asarray(q, dtype=float)
    if closed_form and model.n_links == 2:
        return _two_link_gravity(model, q)
    return _chain_gravity(model, q)


def ee_jacobian(model: ManipulatorModel, q: np.ndarray, closed_form: bool = True) -> np.ndarray:
    """
    Planar end-effector position Jacobian ∂(x, y)/∂q, shape (2, n).

    Used to map a Cartesian tip force F to joint torques, τ_ext = J_eeᵀ F.
    """
    q = np.asarray(q, dtype=float)
    if closed_form and model.n_links == 2:
        return _two_link_ee_jacobian(model, q)
    return _chain_ee_jacobian(model, q)


def forward_kinematics(model: ManipulatorModel, q: np.ndarray) -> np.ndarray:
    """End-effector position (x, y) [m]."""
    phi = _absolute_angles(q)
    return np.array([
        np.sum(model.link_length * np.cos(phi)),
        np.sum(model.link_length * np.sin(phi)),
    ])


def potential_energy(model: ManipulatorModel, q: np.ndarray) -> float:
    """Gravitational potential energy, zero at y = 0 [J]."""
    phi = _absolute_angles(q)
    joint_heights = np.concatenate([[0.0], np.cumsum(model.link_length * np.sin(phi))[:-1]])
    com_heights = joint_heights + model.com_offset * np.sin(phi)
    return float(model.gravity * np.dot(model.link_mass, com_heights))


def kinetic_energy(model: ManipulatorModel, q: np.ndarray, q_dot: np.ndarray) -> float:
    """½ q̇ᵀ M(q) q̇ [J]."""
    q_dot = np.asarray(q_dot, dtype=float)
    return float(0.5 * q_dot @ mass_matrix(model, q) @ q_dot)


def dynamics_terms(model: ManipulatorModel, state: JointState) -> DynamicsTerms:
    """Evaluate (M, C, G) at a joint state."""
    return DynamicsTerms(
        M=mass_matrix(model, state.q),
        C=coriolis_matrix(model, state.q, state.q_dot),
        G=gravity_vector(model, state.q),
    )


def forward_dynamics(
    model: ManipulatorModel,
    state: JointState,
    tau: np.ndarray,
    terms: DynamicsTerms = None,
) -> np.ndarray:
    """
    Joint accelerations q̈ = M⁻¹ (τ − C q̇ − G − b q̇).

    Args:
        model: Manipulator parameters
        state: Current joint state
        tau: Total joint torque (actuation plus external) [N·m]
        terms: Precomputed (M, C, G) at `state`, if available

    Returns:
        q̈ [rad/s²]
    """
    if terms is None:
        terms = dynamics_terms(model, state)
    rhs = np.asarray(tau, dtype=float) - terms.C @ state.q_dot - terms.G - model.friction * state.q_dot
    return np.linalg.solve(terms.M, rhs)
