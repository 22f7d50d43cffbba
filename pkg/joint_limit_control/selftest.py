"""
Structural invariant checks run by `main.py selftest`.

Each check samples random states with a seeded generator and returns a
CheckResult; the suite prints as a pass/fail matrix. The Coriolis function
is injectable so a deliberately broken C can be shown to fail the
skew-symmetry checks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .analysis import radial_unboundedness_probe
from .control import (
    ControlGains,
    ControlLaw,
    Controller,
    ReferenceSample,
    gain_transform,
    parametrized_tracking_law,
    setpoint_law,
    xi_space_tracking_torque,
)
from .dynamics import (
    JointState,
    ManipulatorModel,
    coriolis_matrix,
    desk_model,
    dynamics_terms,
    gravity_vector,
    mass_matrix,
    mass_matrix_derivatives,
    potential_energy,
)
from .parametrization import (
    JointLimits,
    jacobian_diagonal,
    jacobian_dot_diagonal,
    q_of_xi,
    xi_of_q,
)

logger = logging.getLogger(__name__)

CoriolisFn = Callable[[ManipulatorModel, np.ndarray, np.ndarray], np.ndarray]

DEFAULT_SAMPLES = 1000


def desk_limits() -> JointLimits:
    """Hip [-30, 85] deg, knee [-100, 0] deg."""
    return JointLimits.from_degrees([-30.0, -100.0], [85.0, 0.0])


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class SelftestResult:
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> List[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_table(self) -> str:
        width = max((len(c.name) for c in self.checks), default=10)
        lines = []
        for c in self.checks:
            mark = "PASS" if c.passed else "FAIL"
            lines.append(f"  {c.name.ljust(width)}  {mark}  {c.detail}")
        return "\n".join(lines)


def _skew_q(model: ManipulatorModel, coriolis: CoriolisFn, rng: np.random.Generator, samples: int) -> List[CheckResult]:
    # Ṁ twice: from the analytic ∂M/∂q and by central difference of M along q̇
    h = 1e-6
    worst = worst_fd = worst_m_dot = 0.0
    for _ in range(samples):
        q = rng.uniform(-np.pi, np.pi, model.n_links)
        q_dot = rng.normal(0.0, 2.0, model.n_links)
        v = rng.normal(size=model.n_links)
        speed = max(np.linalg.norm(q_dot), 1e-12)
        M_dot = np.tensordot(q_dot, mass_matrix_derivatives(model, q), axes=1)
        M_dot_fd = (mass_matrix(model, q + h * q_dot) - mass_matrix(model, q - h * q_dot)) / (2 * h)
        C = coriolis(model, q, q_dot)
        worst = max(worst, abs(v @ (M_dot - 2.0 * C) @ v) / (v @ v * speed))
        worst_fd = max(worst_fd, abs(v @ (M_dot_fd - 2.0 * C) @ v) / (v @ v * speed))
        worst_m_dot = max(worst_m_dot, np.max(np.abs(M_dot - M_dot_fd)) / speed)
    return [
        CheckResult("skew(M_dot - 2C)", worst <= 1e-8, f"worst {worst:.2e}"),
        CheckResult("skew(M_dot_fd - 2C)", worst_fd <= 1e-6, f"worst {worst_fd:.2e}"),
        CheckResult("M_dot analytic == finite difference", worst_m_dot <= 1e-6, f"worst {worst_m_dot:.2e}"),
    ]


def _skew_xi(
    model: ManipulatorModel, limits: JointLimits, coriolis: CoriolisFn, rng: np.random.Generator, samples: int
) -> CheckResult:
    worst = 0.0
    for _ in range(samples):
        xi = rng.uniform(-3.0, 3.0, limits.n_joints)
        xi_dot = rng.normal(size=limits.n_joints)
        v = rng.normal(size=limits.n_joints)
        J = jacobian_diagonal(limits, xi)
        J_dot = jacobian_dot_diagonal(limits, xi, xi_dot)
        q, q_dot = q_of_xi(limits, xi), J * xi_dot
        M = mass_matrix(model, q)
        M_dot = np.tensordot(q_dot, mass_matrix_derivatives(model, q), axes=1)
        M_xi_dot = J_dot[:, None] * M * J[None, :] + J[:, None] * M_dot * J[None, :] + J[:, None] * M * J_dot[None, :]
        C_xi = J[:, None] * (M * J_dot[None, :] + coriolis(model, q, q_dot) * J[None, :])
        residual = abs(v @ (M_xi_dot - 2.0 * C_xi) @ v)
        worst = max(worst, residual / (v @ v * max(np.linalg.norm(q_dot), 1e-12)))
    return CheckResult("skew(M_xi_dot - 2C_xi)", worst <= 1e-8, f"worst {worst:.2e}")


def _spd(model: ManipulatorModel, limits: JointLimits, rng: np.random.Generator, samples: int) -> List[CheckResult]:
    min_M = min_M_xi = np.inf
    for _ in range(samples):
        q = rng.uniform(-np.pi, np.pi, model.n_links)
        min_M = min(min_M, np.min(np.linalg.eigvalsh(mass_matrix(model, q))))
        xi = rng.uniform(-3.0, 3.0, limits.n_joints)
        J = jacobian_diagonal(limits, xi)
        M_xi = J[:, None] * mass_matrix(model, q_of_xi(limits, xi)) * J[None, :]
        min_M_xi = min(min_M_xi, np.min(np.linalg.eigvalsh(M_xi)))
    return [
        CheckResult("M positive definite", bool(min_M > 0), f"min eig {min_M:.3e}"),
        CheckResult("M_xi positive definite |xi|<=3", bool(min_M_xi > 0), f"min eig {min_M_xi:.3e}"),
    ]


def _closed_form_vs_chain(model: ManipulatorModel, rng: np.random.Generator, samples: int) -> CheckResult:
    worst = 0.0
    for _ in range(samples):
        q = rng.uniform(-np.pi, np.pi, model.n_links)
        q_dot = rng.normal(size=model.n_links)
        worst = max(
            worst,
            np.max(np.abs(mass_matrix(model, q) - mass_matrix(model, q, closed_form=False))),
            np.max(np.abs(coriolis_matrix(model, q, q_dot) - coriolis_matrix(model, q, q_dot, closed_form=False))),
            np.max(np.abs(gravity_vector(model, q) - gravity_vector(model, q, closed_form=False))),
        )
    return CheckResult("closed form == chain", worst <= 1e-10, f"worst {worst:.2e}")


def _gravity_gradient(model: ManipulatorModel, rng: np.random.Generator, samples: int) -> CheckResult:
    h = 1e-6
    worst = 0.0
    for _ in range(samples):
        q = rng.uniform(-np.pi, np.pi, model.n_links)
        fd = np.array([
            (potential_energy(model, q + h * e) - potential_energy(model, q - h * e)) / (2 * h)
            for e in np.eye(model.n_links)
        ])
        worst = max(worst, np.max(np.abs(fd - gravity_vector(model, q))))
    return CheckResult("G = dP/dq", worst <= 1e-6, f"worst {worst:.2e}")


def _jacobians(limits: JointLimits, rng: np.random.Generator, samples: int) -> CheckResult:
    h = 1e-6
    worst = 0.0
    for _ in range(samples):
        xi = rng.uniform(-3.0, 3.0, limits.n_joints)
        xi_dot = rng.normal(size=limits.n_joints)
        J = jacobian_diagonal(limits, xi)
        J_fd = (q_of_xi(limits, xi + h) - q_of_xi(limits, xi - h)) / (2 * h)
        J_dot = jacobian_dot_diagonal(limits, xi, xi_dot)
        J_dot_fd = (jacobian_diagonal(limits, xi + h * xi_dot) - jacobian_diagonal(limits, xi - h * xi_dot)) / (2 * h)
        scale = np.maximum(np.abs(J), 1e-12)
        worst = max(worst, np.max(np.abs(J_fd - J) / scale), np.max(np.abs(J_dot_fd - J_dot) / scale))
    return CheckResult("J, J_dot vs finite differences", worst <= 1e-6, f"worst rel {worst:.2e}")


def _round_trip(limits: JointLimits, rng: np.random.Generator, samples: int) -> List[CheckResult]:
    xi = rng.uniform(-15.0, 15.0, (samples, limits.n_joints))
    q = q_of_xi(limits, xi)
    q_back = q_of_xi(limits, xi_of_q(limits, q, boundary_tol=0.0))
    err = float(np.max(np.abs(q_back - q)))
    wide = q_of_xi(limits, rng.uniform(-60.0, 60.0, (samples, limits.n_joints)))
    inside = bool(np.all(wide > limits.q_min) and np.all(wide < limits.q_max))
    return [
        CheckResult("round trip |xi|<=15", err <= 1e-10, f"max err {err:.2e} rad"),
        CheckResult("q_of_xi strictly inside", inside),
    ]


def _law_identities(model: ManipulatorModel, limits: JointLimits, rng: np.random.Generator, samples: int) -> List[CheckResult]:
    n = limits.n_joints
    kp_prime = np.diag(rng.uniform(5.0, 30.0, n))
    kd_prime = np.diag(rng.uniform(0.5, 3.0, n))
    gains = ControlGains(kp_prime, kd_prime)
    worst_pullback = worst_transform = worst_setpoint = 0.0
    for _ in range(samples):
        state = JointState(q_of_xi(limits, rng.uniform(-2.0, 2.0, n)), rng.normal(size=n))
        terms = dynamics_terms(model, state)
        ref = ReferenceSample.from_joint_space(
            q_of_xi(limits, rng.uniform(-2.0, 2.0, n)), rng.normal(size=n), rng.normal(size=n), limits
        )
        tau_joint = parametrized_tracking_law(terms, state, ref, limits, gains)
        tau_xi = xi_space_tracking_torque(terms, state, ref, limits, gains)
        J = jacobian_diagonal(limits, xi_of_q(limits, state.q))
        worst_pullback = max(worst_pullback, np.max(np.abs(J * tau_joint - tau_xi)) / max(1.0, np.max(np.abs(tau_xi))))

        still = ReferenceSample.from_joint_space(ref.q_d, np.zeros(n), np.zeros(n), limits)
        transformed = gain_transform(limits, xi_of_q(limits, state.q), kp_prime, kd_prime)
        tau_transformed = parametrized_tracking_law(terms, state, still, limits, transformed)
        tau_setpoint = setpoint_law(terms, state, ref.q_d, limits, gains)
        worst_transform = max(worst_transform, np.max(np.abs(tau_transformed - tau_setpoint)) / max(1.0, np.max(np.abs(tau_setpoint))))

        at_rest = JointState(ref.q_d, np.zeros(n))
        G = gravity_vector(model, ref.q_d)
        for law in ControlLaw:
            if law is ControlLaw.NONE:
                continue
            tau = Controller(law, gains).raw_torque(model, limits, at_rest, still)
            worst_setpoint = max(worst_setpoint, np.max(np.abs(tau - G)))
    return [
        CheckResult("J^T tau(xi law) == tau_xi", worst_pullback <= 1e-9, f"worst rel {worst_pullback:.2e}"),
        CheckResult("gain transform == set-point law", worst_transform <= 1e-10, f"worst rel {worst_transform:.2e}"),
        CheckResult("tau = G at rest on the reference", worst_setpoint <= 1e-9, f"worst {worst_setpoint:.2e}"),
    ]


def _radial(model: ManipulatorModel, limits: JointLimits) -> CheckResult:
    gains = ControlGains.diagonal([20.0, 10.0], [2.0, 1.0])
    sweeps = [radial_unboundedness_probe(gains, limits, model, xi_ref=xi, seed=1) for xi in (np.zeros(2), np.array([8.0, -8.0]))]
    passed = all(p.passed for p in sweeps)
    return CheckResult("V radially unbounded", passed, f"{sum(len(p.rays) for p in sweeps)} rays")


def run_selftest(
    model: Optional[ManipulatorModel] = None,
    limits: Optional[JointLimits] = None,
    coriolis: CoriolisFn = coriolis_matrix,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> SelftestResult:
    """
    Run every invariant check on the given plant (default: desk model and limits).

    Args:
        coriolis: C(q, q̇) used by the skew-symmetry checks
        samples: Random samples per check
        seed: Generator seed
    """
    model = model or desk_model()
    limits = limits or desk_limits()
    rng = np.random.default_rng(seed)
    result = SelftestResult()
    result.checks += _spd(model, limits, rng, samples)
    result.checks += _skew_q(model, coriolis, rng, samples)
    result.checks.append(_skew_xi(model, limits, coriolis, rng, samples))
    if model.n_links == 2:
        result.checks.append(_closed_form_vs_chain(model, rng, samples))
    result.checks.append(_gravity_gradient(model, rng, samples))
    result.checks.append(_jacobians(limits, rng, samples))
    result.checks += _round_trip(limits, rng, samples)
    result.checks += _law_identities(model, limits, rng, samples)
    if limits.n_joints == 2:
        result.checks.append(_radial(model, limits))
    for check in result.checks:
        logger.debug("%s: %s %s", check.name, "pass" if check.passed else "FAIL", check.detail)
    return result
