"""
Lockstep integration of many two-link runs of the ξ-space tracking law.

Randomised sweeps integrate hundreds of runs that differ only in initial
state, reference and gains. Here they advance together as stacked arrays
(run axis first), so each integrator stage costs a fixed number of numpy
calls however many runs share the stack. The arithmetic follows
`simulation.run` for the same law, closed-form plant and integrator;
`tests/test_lockstep.py` compares the two.

A run whose state or reference leaves the joint box, or turns non-finite,
is flagged and returned as None so the caller can replay it with the scalar
simulator, which reports such runs in full.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Optional, Sequence

import numpy as np

from .analysis import TraceColumns
from .control import ControlLaw
from .dynamics import (
    ManipulatorModel,
    solve_stacked_2x2,
    stacked_coriolis_matrix,
    stacked_gravity_vector,
    stacked_mass_matrix,
)
from .parametrization import JointLimits, q_of_xi

if TYPE_CHECKING:
    from .simulation import SimConfig

logger = logging.getLogger(__name__)


# Runs per stack; bounds the memory held by the recorded columns.
LOCKSTEP_CHUNK = 100


def lockstep_eligible(config: "SimConfig") -> bool:
    """Two-link runs of the ξ-space tracking law, exact feedforward, no external force."""
    controller = config.controller
    return (
        config.model.n_links == 2
        and controller.law is ControlLaw.PROPOSED
        and not controller.approx_coriolis_feedforward
        and config.force.kind == "none"
        and config.reference.kind in ("constant", "sinusoid")
    )


def lockstep_key(config: "SimConfig") -> tuple:
    """Eligible configs with equal keys can share one stack."""
    c = config.controller
    return (
        id(config.model),
        id(config.limits),
        config.dt,
        config.n_steps,
        config.integrator,
        c.xi_saturation,
        c.boundary_tol,
    )


# ============================================================================
# Stacked pieces
# ============================================================================

def _mv(A: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Row-wise matrix-vector product, (B, n, n) @ (B, n) -> (B, n)."""
    return np.matmul(A, x[:, :, None])[:, :, 0]


def _quadratic(x: np.ndarray, A: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row-wise xᵀ A y."""
    return np.einsum("bi,bij,bj->b", x, A, y)


@dataclass(frozen=True, eq=False)
class _Box:
    """Joint box and ξ options shared by a stack."""
    limits: JointLimits
    boundary_tol: float
    xi_saturation: float

    def outside(self, q: np.ndarray) -> np.ndarray:
        """Rows that xi_of_q would reject."""
        lo = self.limits.q_min + self.boundary_tol
        hi = self.limits.q_max - self.boundary_tol
        bad = ~np.isfinite(q) | (q <= lo) | (q >= hi)
        return np.any(bad, axis=1)

    def xi(self, q: np.ndarray) -> np.ndarray:
        xi = np.arctanh((q - self.limits.q0) / self.limits.half_range)
        return np.clip(xi, -self.xi_saturation, self.xi_saturation)

    def jacobian(self, xi: np.ndarray) -> np.ndarray:
        return self.limits.half_range / np.cosh(xi) ** 2


@dataclass(frozen=True, eq=False)
class _References:
    """
    Per-run references written as q_d(t) = a sin(ωt + ρ) + c.

    A constant reference has a = ω = ρ = 0 and c = q_d.
    """
    amplitude: np.ndarray
    omega: np.ndarray
    rho: np.ndarray
    center: np.ndarray

    @classmethod
    def of(cls, configs: Sequence["SimConfig"]) -> "_References":
        amplitude, omega, rho, center = [], [], [], []
        for config in configs:
            gen = config.reference
            if gen.kind == "constant":
                zero = np.zeros_like(gen.q_d)
                amplitude.append(zero)
                omega.append(zero)
                rho.append(zero)
                center.append(gen.q_d)
            else:
                amplitude.append(gen.limits.half_range / gen.rate_divisor)
                omega.append(gen.omega)
                rho.append(gen.rho)
                center.append(gen.limits.q0)
        return cls(*(np.array(values, dtype=float) for values in (amplitude, omega, rho, center)))

    def sample(self, box: _Box, t: float) -> "_RefSample":
        phase = self.omega * t + self.rho
        sin = np.sin(phase)
        q_d = self.amplitude * sin + self.center
        q_d_dot = self.amplitude * self.omega * np.cos(phase)
        q_d_ddot = -self.amplitude * self.omega ** 2 * sin
        outside = box.outside(q_d)
        xi_d = box.xi(q_d)
        J = box.jacobian(xi_d)
        xi_d_dot = q_d_dot / J
        J_dot = -2.0 * np.tanh(xi_d) * J * xi_d_dot
        xi_d_ddot = (q_d_ddot - J_dot * xi_d_dot) / J
        return _RefSample(q_d, xi_d, xi_d_dot, xi_d_ddot, outside)


@dataclass(frozen=True, eq=False)
class _RefSample:
    q_d: np.ndarray
    xi_d: np.ndarray
    xi_d_dot: np.ndarray
    xi_d_ddot: np.ndarray
    outside: np.ndarray


@dataclass(frozen=True, eq=False)
class _Stage:
    xi: np.ndarray
    xi_err: np.ndarray
    xi_err_dot: np.ndarray
    tau_raw: np.ndarray
    tau: np.ndarray
    saturated: np.ndarray
    q_ddot: np.ndarray
    failed: np.ndarray


@dataclass(frozen=True, eq=False)
class _Stack:
    model: ManipulatorModel
    box: _Box
    Kp: np.ndarray
    Kd: np.ndarray
    tau_max: np.ndarray

    def evaluate(self, ref: _RefSample, q: np.ndarray, v: np.ndarray) -> _Stage:
        """Tracking law and plant acceleration for every run at (q, v)."""
        box, model = self.box, self.model
        xi = box.xi(q)
        J = box.jacobian(xi)
        xi_dot = v / J
        xi_err = xi - ref.xi_d
        xi_err_dot = xi_dot - ref.xi_d_dot
        J_dot = -2.0 * np.tanh(xi) * J * xi_dot

        M = stacked_mass_matrix(model, q)
        C = stacked_coriolis_matrix(model, q, v)
        G = stacked_gravity_vector(model, q)
        feedforward = _mv(M, J * ref.xi_d_ddot) + _mv(M, J_dot * ref.xi_d_dot) + _mv(C, J * ref.xi_d_dot)
        feedback = (_mv(self.Kp, xi_err) + _mv(self.Kd, xi_err_dot)) / J
        tau_raw = feedforward + G - feedback

        tau = np.clip(tau_raw, -self.tau_max, self.tau_max)
        saturated = np.any(tau != tau_raw, axis=1) | ~np.all(np.isfinite(tau_raw), axis=1)
        rhs = tau - _mv(C, v) - G - model.friction * v
        q_ddot = solve_stacked_2x2(M, rhs)
        failed = box.outside(q) | ~np.all(np.isfinite(v), axis=1) | ~np.all(np.isfinite(q_ddot), axis=1)
        return _Stage(xi, xi_err, xi_err_dot, tau_raw, tau, saturated, q_ddot, failed)

    def storage(self, stage: _Stage) -> tuple:
        """(V, V̇_analytic) per run, with M_ξ evaluated at q(ξ)."""
        J = self.box.jacobian(stage.xi)
        M = stacked_mass_matrix(self.model, q_of_xi(self.box.limits, stage.xi))
        M_xi = J[:, :, None] * M * J[:, None, :]
        V = 0.5 * _quadratic(stage.xi_err_dot, M_xi, stage.xi_err_dot) + 0.5 * _quadratic(stage.xi_err, self.Kp, stage.xi_err)
        V_dot = -_quadratic(stage.xi_err_dot, self.Kd, stage.xi_err_dot)
        return V, V_dot


# ============================================================================
# Integration
# ============================================================================

def integrate_lockstep(configs: Sequence["SimConfig"]) -> List[Optional[TraceColumns]]:
    """
    Integrate eligible configs sharing one `lockstep_key` as a single stack.

    Returns:
        Report columns per config, in input order; None where the run left
        the joint box, met an infeasible reference or diverged

    Raises:
        ValueError: A config is not eligible or does not share the first key
    """
    if not configs:
        return []
    first = configs[0]
    key = lockstep_key(first)
    for config in configs:
        if not lockstep_eligible(config) or lockstep_key(config) != key:
            raise ValueError(f"config '{config.name}' cannot join this lockstep stack")

    controller = first.controller
    box = _Box(first.limits, controller.boundary_tol, controller.xi_saturation)
    stack = _Stack(
        model=first.model,
        box=box,
        Kp=np.stack([c.controller.gains.Kp for c in configs]),
        Kd=np.stack([c.controller.gains.Kd for c in configs]),
        tau_max=np.array([[c.controller.tau_max] for c in configs]),
    )
    refs = _References.of(configs)
    n_runs, n_records, dt = len(configs), first.n_steps + 1, first.dt
    logger.debug("lockstep stack of %d runs, %d records each", n_runs, n_records)

    shape = (n_records, n_runs, 2)
    cols = {name: np.empty(shape) for name in ("q", "q_d", "xi_err", "xi_err_dot", "tau", "tau_raw")}
    V = np.empty((n_records, n_runs))
    V_dot = np.empty((n_records, n_runs))
    saturated = np.empty((n_records, n_runs), dtype=bool)

    q = np.stack([c.q_init for c in configs])
    v = np.stack([c.q_dot_init for c in configs])
    failed = np.zeros(n_runs, dtype=bool)
    parked = np.tile(first.limits.q0, (n_runs, 1))

    with np.errstate(all="ignore"):
        ref = refs.sample(box, 0.0)
        for k in range(n_records):
            t = k * dt
            s1 = stack.evaluate(ref, q, v)
            failed |= s1.failed | ref.outside

            cols["q"][k] = q
            cols["q_d"][k] = ref.q_d
            cols["xi_err"][k] = s1.xi_err
            cols["xi_err_dot"][k] = s1.xi_err_dot
            cols["tau"][k] = s1.tau
            cols["tau_raw"][k] = s1.tau_raw
            V[k], V_dot[k] = stack.storage(s1)
            saturated[k] = s1.saturated
            if k == n_records - 1:
                break

            t_next = (k + 1) * dt
            if first.integrator == "semi-implicit-euler":
                v_next = v + dt * s1.q_ddot
                q_next = q + dt * v_next
                ref_next = refs.sample(box, t_next)
            else:
                half = 0.5 * dt
                ref_half = refs.sample(box, t + half)
                q2, v2 = q + half * v, v + half * s1.q_ddot
                s2 = stack.evaluate(ref_half, q2, v2)
                q3, v3 = q + half * v2, v + half * s2.q_ddot
                s3 = stack.evaluate(ref_half, q3, v3)
                q4, v4 = q + dt * v3, v + dt * s3.q_ddot
                ref_end = refs.sample(box, t + dt)
                s4 = stack.evaluate(ref_end, q4, v4)
                failed |= s2.failed | s3.failed | s4.failed | ref_half.outside | ref_end.outside
                q_next = q + dt / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4)
                v_next = v + dt / 6.0 * (s1.q_ddot + 2.0 * s2.q_ddot + 2.0 * s3.q_ddot + s4.q_ddot)
                ref_next = ref_end if t_next == t + dt else refs.sample(box, t_next)

            failed |= ~(np.all(np.isfinite(q_next), axis=1) & np.all(np.isfinite(v_next), axis=1))
            # failed runs are replayed by the caller; park them at rest mid-box
            q = np.where(failed[:, None], parked, q_next)
            v = np.where(failed[:, None], 0.0, v_next)
            ref = ref_next

    if failed.any():
        logger.info("lockstep: %d of %d runs handed back for a scalar replay", int(failed.sum()), n_runs)
    t = np.arange(n_records) * dt
    law = controller.law.value
    results: List[Optional[TraceColumns]] = []
    for b in range(n_runs):
        if failed[b]:
            results.append(None)
            continue
        results.append(TraceColumns(
            law=law,
            t=t,
            q=cols["q"][:, b],
            q_d=cols["q_d"][:, b],
            xi_err=cols["xi_err"][:, b],
            xi_err_dot=cols["xi_err_dot"][:, b],
            tau=cols["tau"][:, b],
            tau_raw=cols["tau_raw"][:, b],
            V=V[:, b],
            V_dot_analytic=V_dot[:, b],
            saturated=saturated[:, b],
        ))
    return results
