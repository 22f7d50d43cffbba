"""
Joint-space control laws for torque-controlled manipulators.

Laws (all return joint torques τ):
- classical:    τ = M q̈_d + C q̇_d + G − K_P q̃ − K_D q̃̇
- proposed:     τ = M J ξ̈_d + (M J̇ + C J) ξ̇_d + G − J⁻¹K_P ξ̃ − J⁻¹K_D ξ̃̇
                (the ξ-space tracking law τ_ξ = M_ξ ξ̈_d + C_ξ ξ̇_d + G_ξ − K_P ξ̃ − K_D ξ̃̇
                pulled back through τ_ξ = Jᵀτ)
- setpoint:     τ = G − K'_P ξ̃ − K'_D q̇
- substituted:  classical feedforward with −K_P q̃ replaced by −K_P ξ̃
- none:         τ = 0

The law functions are pure. `Controller` bundles a law with its gains,
saturation policy and feedforward options and is what the simulator calls.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .dynamics import DynamicsTerms, JointState, ManipulatorModel, coriolis_matrix, dynamics_terms
from .parametrization import (
    BOUNDARY_TOL,
    XI_SATURATION,
    JointLimits,
    XiState,
    jacobian_diagonal,
    jacobian_dot_diagonal,
    to_xi_dynamics,
    xi_of_q,
)


DEFAULT_TAU_MAX = 1000.0


class ControlLaw(str, Enum):
    CLASSICAL = "classical"
    PROPOSED = "proposed"
    SETPOINT = "setpoint"
    SUBSTITUTED = "substituted"
    NONE = "none"

    @property
    def requires_feasible_space(self) -> bool:
        """Laws that evaluate ξ need q (and q_d) strictly inside the joint box."""
        return self in (ControlLaw.PROPOSED, ControlLaw.SETPOINT, ControlLaw.SUBSTITUTED)


# ============================================================================
# Types
# ============================================================================

@dataclass(frozen=True, eq=False)
class ControlGains:
    """
    Proportional and derivative gain matrices.

    Units depend on the consuming law: N·m/rad and N·m·s/rad for q-space
    feedback, N·m and N·m·s for ξ-space feedback.
    """
    Kp: np.ndarray
    Kd: np.ndarray

    def __post_init__(self):
        Kp = np.atleast_2d(np.array(self.Kp, dtype=float))
        Kd = np.atleast_2d(np.array(self.Kd, dtype=float))
        for name, K in (("Kp", Kp), ("Kd", Kd)):
            if K.ndim != 2 or K.shape[0] != K.shape[1]:
                raise ValueError(f"{name} must be a square matrix, got shape {K.shape}")
            if not np.all(np.isfinite(K)):
                raise ValueError(f"{name} must be finite")
            scale = max(float(np.max(np.abs(K))), 1.0)
            if np.max(np.abs(K - K.T)) > 1e-12 * scale:
                raise ValueError(f"{name} must be symmetric")
        if Kp.shape != Kd.shape:
            raise ValueError(f"Kp and Kd differ in shape ({Kp.shape} vs {Kd.shape})")
        if np.min(np.linalg.eigvalsh(Kp)) <= 0:
            raise ValueError("Kp must be positive definite")
        if np.min(np.linalg.eigvalsh(Kd)) < -1e-12 * max(float(np.max(np.abs(Kd))), 1.0):
            raise ValueError("Kd must be positive semidefinite")
        object.__setattr__(self, "Kp", Kp)
        object.__setattr__(self, "Kd", Kd)

    @classmethod
    def diagonal(cls, kp, kd) -> "ControlGains":
        return cls(np.diag(np.asarray(kp, dtype=float)), np.diag(np.asarray(kd, dtype=float)))


@dataclass(frozen=True, eq=False)
class ReferenceSample:
    """
    Desired joint trajectory at one instant, with its ξ-space image when the
    sample lies inside the joint box.
    """
    q_d: np.ndarray
    q_d_dot: np.ndarray
    q_d_ddot: np.ndarray
    xi_d: Optional[np.ndarray] = None
    xi_d_dot: Optional[np.ndarray] = None
    xi_d_ddot: Optional[np.ndarray] = None

    @property
    def has_xi(self) -> bool:
        return self.xi_d is not None

    @classmethod
    def from_joint_space(
        cls,
        q_d: np.ndarray,
        q_d_dot: np.ndarray,
        q_d_ddot: np.ndarray,
        limits: Optional[JointLimits] = None,
        boundary_tol: float = BOUNDARY_TOL,
        xi_saturation: float = XI_SATURATION,
    ) -> "ReferenceSample":
        """
        Build a sample and, when limits are given, its ξ-space triple

            ξ_d = atanh(δ⁻¹(q_d − q_0)),  ξ̇_d = J⁻¹ q̇_d,  ξ̈_d = J⁻¹(q̈_d − J̇ ξ̇_d)

        Raises:
            OutOfFeasibleSpace: limits given and q_d not strictly inside them
        """
        q_d = np.asarray(q_d, dtype=float)
        q_d_dot = np.asarray(q_d_dot, dtype=float)
        q_d_ddot = np.asarray(q_d_ddot, dtype=float)
        if limits is None:
            return cls(q_d, q_d_dot, q_d_ddot)
        xi_d = xi_of_q(limits, q_d, boundary_tol=boundary_tol, xi_saturation=xi_saturation)
        J = jacobian_diagonal(limits, xi_d)
        xi_d_dot = q_d_dot / J
        J_dot = jacobian_dot_diagonal(limits, xi_d, xi_d_dot)
        xi_d_ddot = (q_d_ddot - J_dot * xi_d_dot) / J
        return cls(q_d, q_d_dot, q_d_ddot, xi_d, xi_d_dot, xi_d_ddot)

    def require_xi(self) -> None:
        if not self.has_xi:
            raise ValueError("this law needs the ξ-space reference; build the sample with joint limits")


@dataclass(frozen=True, eq=False)
class XiTrackingError:
    """ξ, ξ̇, the ξ-space errors and the Jacobian diagonal at one state."""
    xi: np.ndarray
    xi_dot: np.ndarray
    xi_err: np.ndarray
    xi_err_dot: np.ndarray
    J: np.ndarray


@dataclass(frozen=True, eq=False)
class ControlOutput:
    """Torque before and after saturation."""
    tau_raw: np.ndarray
    tau: np.ndarray
    saturated: bool


# ============================================================================
# Law building blocks
# ============================================================================

def xi_tracking_error(
    limits: JointLimits,
    state: JointState,
    ref: ReferenceSample,
    boundary_tol: float = BOUNDARY_TOL,
    xi_saturation: float = XI_SATURATION,
) -> XiTrackingError:
    """
    ξ̃ = ξ − ξ_d and ξ̃̇ = J⁻¹(ξ) q̇ − ξ̇_d for a measured joint state.

    Raises:
        OutOfFeasibleSpace: q not strictly inside the joint box
    """
    ref.require_xi()
    xi = xi_of_q(limits, state.q, boundary_tol=boundary_tol, xi_saturation=xi_saturation)
    J = jacobian_diagonal(limits, xi)
    xi_dot = state.q_dot / J
    return XiTrackingError(
        xi=xi,
        xi_dot=xi_dot,
        xi_err=xi - ref.xi_d,
        xi_err_dot=xi_dot - ref.xi_d_dot,
        J=J,
    )


def saturate_torque(tau: np.ndarray, tau_max: float) -> ControlOutput:
    """Clamp each torque component to ±tau_max."""
    tau = np.asarray(tau, dtype=float)
    clipped = np.clip(tau, -tau_max, tau_max)
    saturated = bool(np.any(clipped != tau)) or not np.all(np.isfinite(tau))
    return ControlOutput(tau_raw=tau, tau=clipped, saturated=saturated)


# ============================================================================
# Control laws
# ============================================================================

def classical_law(terms: DynamicsTerms, state: JointState, ref: ReferenceSample, gains: ControlGains) -> np.ndarray:
    """
    Passivity-based tracking law in joint space.

        τ = M q̈_d + C q̇_d + G − K_P q̃ − K_D q̃̇,   q̃ = q − q_d
    """
    q_err = state.q - ref.q_d
    q_err_dot = state.q_dot - ref.q_d_dot
    return (
        terms.M @ ref.q_d_ddot
        + terms.C @ ref.q_d_dot
        + terms.G
        - gains.Kp @ q_err
        - gains.Kd @ q_err_dot
    )


def xi_space_tracking_torque(
    terms: DynamicsTerms,
    state: JointState,
    ref: ReferenceSample,
    limits: JointLimits,
    gains: ControlGains,
    **xi_options,
) -> np.ndarray:
    """
    Tracking law stated in ξ coordinates; returns τ_ξ.

        τ_ξ = M_ξ ξ̈_d + C_ξ ξ̇_d + G_ξ − K_P ξ̃ − K_D ξ̃̇
    """
    err = xi_tracking_error(limits, state, ref, **xi_options)
    xi_terms = to_xi_dynamics(terms, limits, XiState(err.xi, err.xi_dot))
    return (
        xi_terms.M_xi @ ref.xi_d_ddot
        + xi_terms.C_xi @ ref.xi_d_dot
        + xi_terms.G_xi
        - gains.Kp @ err.xi_err
        - gains.Kd @ err.xi_err_dot
    )


def parametrized_tracking_law(
    terms: DynamicsTerms,
    state: JointState,
    ref: ReferenceSample,
    limits: JointLimits,
    gains: ControlGains,
    **xi_options,
) -> np.ndarray:
    """
    Joint torques of the ξ-space tracking law.

        τ = M J ξ̈_d + (M J̇ + C J) ξ̇_d + G − J⁻¹K_P ξ̃ − J⁻¹K_D ξ̃̇

    with ξ = xi_of_q(q), ξ̇ = J⁻¹ q̇ and J̇ = J̇(ξ, ξ̇). Jᵀτ equals
    `xi_space_tracking_torque` up to round-off.

    Raises:
        OutOfFeasibleSpace: q outside the joint box
    """
    err = xi_tracking_error(limits, state, ref, **xi_options)
    J_dot = jacobian_dot_diagonal(limits, err.xi, err.xi_dot)
    feedforward = (
        terms.M @ (err.J * ref.xi_d_ddot)
        + terms.M @ (J_dot * ref.xi_d_dot)
        + terms.C @ (err.J * ref.xi_d_dot)
    )
    feedback = (gains.Kp @ err.xi_err + gains.Kd @ err.xi_err_dot) / err.J
    return feedforward + terms.G - feedback


def setpoint_law(
    terms: DynamicsTerms,
    state: JointState,
    q_d: np.ndarray,
    limits: JointLimits,
    gains: ControlGains,
    **xi_options,
) -> np.ndarray:
    """
    Gravity compensation with ξ-space position feedback.

        τ = G(q) − K'_P ξ̃ − K'_D q̇

    No stability proof backs this law; it is validated empirically only.

    Raises:
        OutOfFeasibleSpace: q or q_d outside the joint box
    """
    xi = xi_of_q(limits, state.q, **xi_options)
    xi_d = xi_of_q(limits, q_d, **xi_options)
    return terms.G - gains.Kp @ (xi - xi_d) - gains.Kd @ state.q_dot


def substituted_law(
    terms: DynamicsTerms,
    state: JointState,
    ref: ReferenceSample,
    limits: JointLimits,
    gains: ControlGains,
    **xi_options,
) -> np.ndarray:
    """
    Classical tracking law whose position correction −K_P q̃ is replaced by −K_P ξ̃.

        τ = M q̈_d + C q̇_d + G − K_P ξ̃ − K_D q̃̇
    """
    ref.require_xi()
    xi = xi_of_q(limits, state.q, **xi_options)
    q_err_dot = state.q_dot - ref.q_d_dot
    return (
        terms.M @ ref.q_d_ddot
        + terms.C @ ref.q_d_dot
        + terms.G
        - gains.Kp @ (xi - ref.xi_d)
        - gains.Kd @ q_err_dot
    )


def gain_transform(limits: JointLimits, xi: np.ndarray, Kp_prime: np.ndarray, Kd_prime: np.ndarray) -> ControlGains:
    """
    State-dependent gains K_P = J K'_P and K_D = J K'_D J.

    With these, the feedback of `parametrized_tracking_law` at a set point
    reduces to −K'_P ξ̃ − K'_D q̇, the feedback of `setpoint_law`.

    Raises:
        ValueError: The products are not symmetric (non-diagonal K' with unequal J entries)
    """
    J = np.diag(jacobian_diagonal(limits, xi))
    return ControlGains(
        Kp=J @ np.asarray(Kp_prime, dtype=float),
        Kd=J @ np.asarray(Kd_prime, dtype=float) @ J,
    )


# ============================================================================
# Controller
# ============================================================================

@dataclass(frozen=True, eq=False)
class Controller:
    """
    A control law with its gains and implementation options.

    Attributes:
        law: Which law to evaluate
        gains: K_P, K_D (or K'_P, K'_D for the set-point law)
        tau_max: Componentwise torque limit applied after the law [N·m]
        xi_saturation: Clamp for ξ and ξ_d
        boundary_tol: xi_of_q rejection distance [rad]
        approx_coriolis_feedforward: Use C(q, q̇_d) q̇_d (classical) or
            C(q, Jξ̇_d) Jξ̇_d (proposed) instead of the exact C(q, q̇)
    """
    law: ControlLaw
    gains: ControlGains
    tau_max: float = DEFAULT_TAU_MAX
    xi_saturation: float = XI_SATURATION
    boundary_tol: float = BOUNDARY_TOL
    approx_coriolis_feedforward: bool = False

    def __post_init__(self):
        object.__setattr__(self, "law", ControlLaw(self.law))
        if not self.tau_max > 0:
            raise ValueError("tau_max must be positive")
        if not self.xi_saturation > 0:
            raise ValueError("xi_saturation must be positive")

    @property
    def xi_options(self) -> dict:
        return {"boundary_tol": self.boundary_tol, "xi_saturation": self.xi_saturation}

    def reference(self, limits: JointLimits, q_d, q_d_dot, q_d_ddot, strict: Optional[bool] = None) -> ReferenceSample:
        """Reference sample with the ξ triple whenever this law needs it."""
        if strict is None:
            strict = self.law.requires_feasible_space
        if strict or limits.contains(q_d):
            return ReferenceSample.from_joint_space(q_d, q_d_dot, q_d_ddot, limits, **self.xi_options)
        return ReferenceSample.from_joint_space(q_d, q_d_dot, q_d_ddot)

    def _terms(
        self,
        model: ManipulatorModel,
        limits: JointLimits,
        state: JointState,
        ref: ReferenceSample,
        terms: Optional[DynamicsTerms],
    ) -> DynamicsTerms:
        if terms is None:
            terms = dynamics_terms(model, state)
        if not self.approx_coriolis_feedforward:
            return terms
        if self.law is ControlLaw.PROPOSED:
            xi = xi_of_q(limits, state.q, **self.xi_options)
            velocity = jacobian_diagonal(limits, xi) * ref.xi_d_dot
        else:
            velocity = ref.q_d_dot
        return DynamicsTerms(M=terms.M, C=coriolis_matrix(model, state.q, velocity), G=terms.G)

    def raw_torque(
        self,
        model: ManipulatorModel,
        limits: JointLimits,
        state: JointState,
        ref: ReferenceSample,
        terms: Optional[DynamicsTerms] = None,
    ) -> np.ndarray:
        """
        Unsaturated law output.

        `terms` may carry (M, C, G) already evaluated at `state`.
        """
        if self.law is ControlLaw.NONE:
            return np.zeros_like(state.q)
        terms = self._terms(model, limits, state, ref, terms)
        if self.law is ControlLaw.CLASSICAL:
            return classical_law(terms, state, ref, self.gains)
        if self.law is ControlLaw.PROPOSED:
            return parametrized_tracking_law(terms, state, ref, limits, self.gains, **self.xi_options)
        if self.law is ControlLaw.SETPOINT:
            return setpoint_law(terms, state, ref.q_d, limits, self.gains, **self.xi_options)
        return substituted_law(terms, state, ref, limits, self.gains, **self.xi_options)

    def command(
        self,
        model: ManipulatorModel,
        limits: JointLimits,
        state: JointState,
        ref: ReferenceSample,
        terms: Optional[DynamicsTerms] = None,
    ) -> ControlOutput:
        """Law output clamped to ±tau_max."""
        return saturate_torque(self.raw_torque(model, limits, state, ref, terms), self.tau_max)
