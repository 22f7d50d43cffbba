"""
Parametrization of the feasible joint box by an unconstrained variable ξ.

    q(ξ) = δ tanh(ξ) + q_0,   q_0 = (q_max + q_min)/2,   δ = diag((q_max − q_min)/2)

Any finite ξ maps strictly inside (q_min, q_max). The map is diagonal, so its
Jacobian J(ξ) = diag(δ_i / cosh²(ξ_i)) and the time derivative J̇ are diagonal
as well, and the manipulator dynamics rewritten in ξ read

    M_ξ = JᵀMJ,   C_ξ = Jᵀ(MJ̇ + CJ),   G_ξ = JᵀG,   τ_ξ = Jᵀτ.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .dynamics import DynamicsTerms, JointState
from .exceptions import OutOfFeasibleSpace


# ============================================================================
# Configuration
# ============================================================================

# tanh(100) is 1.0 in double precision, so this bound only prevents overflow.
XI_SATURATION = 100.0

# States closer than this to a bound are rejected by xi_of_q [rad].
BOUNDARY_TOL = 1e-9


# ============================================================================
# Types
# ============================================================================

def _read_only(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


@dataclass(frozen=True, eq=False)
class JointLimits:
    """
    Open joint box Q = {q : q_min < q < q_max} [rad].

    Derived: center q_0 and half range δ (vector `half_range`, matrix `delta`).
    """
    q_min: np.ndarray
    q_max: np.ndarray

    def __post_init__(self):
        q_min = np.array(self.q_min, dtype=float).reshape(-1)
        q_max = np.array(self.q_max, dtype=float).reshape(-1)
        if q_min.shape != q_max.shape:
            raise ValueError(f"q_min and q_max differ in length ({q_min.shape} vs {q_max.shape})")
        if not (np.all(np.isfinite(q_min)) and np.all(np.isfinite(q_max))):
            raise ValueError("joint limits must be finite")
        if np.any(q_max - q_min <= 0):
            bad = np.flatnonzero(q_max - q_min <= 0).tolist()
            raise ValueError(f"joints {bad} have no free motion range (q_max must exceed q_min)")
        q_min.setflags(write=False)
        q_max.setflags(write=False)
        object.__setattr__(self, "q_min", q_min)
        object.__setattr__(self, "q_max", q_max)

    @classmethod
    def from_degrees(cls, q_min_deg: Sequence[float], q_max_deg: Sequence[float]) -> "JointLimits":
        return cls(np.deg2rad(q_min_deg), np.deg2rad(q_max_deg))

    @property
    def n_joints(self) -> int:
        return int(self.q_min.shape[0])

    # derived arrays are computed once per instance and read-only

    @cached_property
    def q0(self) -> np.ndarray:
        return _read_only(0.5 * (self.q_max + self.q_min))

    @cached_property
    def half_range(self) -> np.ndarray:
        return _read_only(0.5 * (self.q_max - self.q_min))

    @cached_property
    def delta(self) -> np.ndarray:
        return _read_only(np.diag(self.half_range))

    def margins(self, q: np.ndarray) -> np.ndarray:
        """Per-joint distance to the nearest bound; positive iff strictly inside."""
        q = np.asarray(q, dtype=float)
        return np.minimum(q - self.q_min, self.q_max - q)

    def contains(self, q: np.ndarray) -> bool:
        return bool(np.all(self.margins(q) > 0))


@dataclass(frozen=True, eq=False)
class XiState:
    """Exogenous coordinates ξ (dimensionless) and rates ξ̇ [1/s]."""
    xi: np.ndarray
    xi_dot: np.ndarray

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float).reshape(-1)
        xi_dot = np.asarray(self.xi_dot, dtype=float).reshape(-1)
        if xi.shape != xi_dot.shape:
            raise ValueError(f"xi and xi_dot must have the same length ({xi.shape} vs {xi_dot.shape})")
        if not (np.all(np.isfinite(xi)) and np.all(np.isfinite(xi_dot))):
            raise ValueError("xi and xi_dot must be finite")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "xi_dot", xi_dot)


@dataclass(frozen=True, eq=False)
class XiDynamicsTerms:
    """Manipulator dynamics expressed in ξ, plus the Jacobian used to build them."""
    M_xi: np.ndarray
    C_xi: np.ndarray
    G_xi: np.ndarray
    J: np.ndarray

    def torque(self, tau: np.ndarray) -> np.ndarray:
        """τ_ξ = Jᵀ τ."""
        return self.J.T @ np.asarray(tau, dtype=float)


# ============================================================================
# Map and derivatives
# ============================================================================

def saturate_xi(xi: np.ndarray, bound: float = XI_SATURATION) -> np.ndarray:
    """Clamp ξ componentwise to ±bound."""
    return np.clip(np.asarray(xi, dtype=float), -bound, bound)


def q_of_xi(limits: JointLimits, xi: np.ndarray) -> np.ndarray:
    """
    Joint angles for exogenous coordinates, strictly inside Q.

    Broadcasts over leading axes: `xi` may have shape (..., n).
    """
    xi = np.asarray(xi, dtype=float)
    q = limits.q0 + limits.half_range * np.tanh(xi)
    # tanh rounds to ±1 for |ξ| ≳ 19; keep the open-interval guarantee anyway
    lower = np.nextafter(limits.q_min, np.inf)
    upper = np.nextafter(limits.q_max, -np.inf)
    return np.clip(q, lower, upper)


def xi_of_q(
    limits: JointLimits,
    q: np.ndarray,
    boundary_tol: float = BOUNDARY_TOL,
    xi_saturation: float = XI_SATURATION,
) -> np.ndarray:
    """
    Inverse map ξ = atanh(δ⁻¹(q − q_0)).

    Args:
        limits: Joint box
        q: Joint angles [rad], shape (..., n)
        boundary_tol: Reject angles within this distance of a bound [rad]
        xi_saturation: Output is clamped to ±xi_saturation

    Returns:
        ξ with the same shape as q

    Raises:
        OutOfFeasibleSpace: Some component is not strictly inside Q
    """
    q = np.asarray(q, dtype=float)
    outside = ~np.isfinite(q) | (q <= limits.q_min + boundary_tol) | (q >= limits.q_max - boundary_tol)
    if np.any(outside):
        joints = np.unique(np.nonzero(np.atleast_1d(outside))[-1]).tolist()
        raise OutOfFeasibleSpace(f"joint angles outside the feasible box on joints {joints}", joints=joints)
    with np.errstate(divide="ignore"):
        xi = np.arctanh((q - limits.q0) / limits.half_range)
    return saturate_xi(xi, xi_saturation)


def jacobian_diagonal(limits: JointLimits, xi: np.ndarray) -> np.ndarray:
    """J_i(ξ) = δ_i (1 − tanh²ξ_i), evaluated as δ_i / cosh²ξ_i."""
    with np.errstate(over="ignore"):
        return limits.half_range / np.cosh(np.asarray(xi, dtype=float)) ** 2


def jacobian(limits: JointLimits, xi: np.ndarray) -> np.ndarray:
    """Diagonal parametrization Jacobian with q̇ = J(ξ) ξ̇."""
    return np.diag(jacobian_diagonal(limits, xi))


def jacobian_dot_diagonal(limits: JointLimits, xi: np.ndarray, xi_dot: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    return -2.0 * np.tanh(xi) * jacobian_diagonal(limits, xi) * np.asarray(xi_dot, dtype=float)


def jacobian_dot(limits: JointLimits, xi: np.ndarray, xi_dot: np.ndarray) -> np.ndarray:
    """J̇_i = −2 δ_i tanh(ξ_i)(1 − tanh²ξ_i) ξ̇_i, so q̈ = J ξ̈ + J̇ ξ̇."""
    return np.diag(jacobian_dot_diagonal(limits, xi, xi_dot))


def xi_state_of(limits: JointLimits, state: JointState, **kwargs) -> XiState:
    """
    Exogenous state for a joint state: ξ = xi_of_q(q), ξ̇ = J⁻¹(ξ) q̇.

    Keyword arguments are forwarded to xi_of_q.

    Raises:
        OutOfFeasibleSpace: q not strictly inside the box
        ValueError: ξ̇ overflows (J underflows at a saturated ξ)
    """
    xi = xi_of_q(limits, state.q, **kwargs)
    return XiState(xi=xi, xi_dot=state.q_dot / jacobian_diagonal(limits, xi))


def to_xi_dynamics(terms: DynamicsTerms, limits: JointLimits, xi: XiState) -> XiDynamicsTerms:
    """
    Transform (M, C, G) evaluated at q = q(ξ), q̇ = Jξ̇ into ξ coordinates.

    M_ξ stays symmetric positive definite for finite ξ, and its i-th row and
    column shrink like 1/cosh⁴ξ_i as joint i approaches a limit.
    """
    J = jacobian(limits, xi.xi)
    J_dot = jacobian_dot(limits, xi.xi, xi.xi_dot)
    return XiDynamicsTerms(
        M_xi=J.T @ terms.M @ J,
        C_xi=J.T @ (terms.M @ J_dot + terms.C @ J),
        G_xi=J.T @ terms.G,
        J=J,
    )


def to_xi_torque(limits: JointLimits, xi: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """τ_ξ = Jᵀ(ξ) τ."""
    return jacobian_diagonal(limits, xi) * np.asarray(tau, dtype=float)

