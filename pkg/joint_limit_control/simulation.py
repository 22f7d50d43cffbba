"""
Fixed-step closed-loop simulation.

The plant is integrated in joint space,

    q̈ = M⁻¹(τ + J_eeᵀF − C q̇ − G − b q̇),

with the control law evaluated at every integrator stage. ξ is a controller
quantity only, so limit avoidance is a genuine closed-loop outcome here.

Also provides the reference generators, the end-effector force ramp, the
breaking-force bisection and randomised batch runs.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .analysis import RunReport, joint_storage, report, report_columns, xi_storage
from .control import ControlGains, ControlLaw, ControlOutput, Controller, ReferenceSample, xi_tracking_error
from .dynamics import JointState, ManipulatorModel, dynamics_terms, ee_jacobian, forward_dynamics
from .exceptions import NumericalDivergence, OutOfFeasibleSpace, ReportsNoBreak
from .lockstep import LOCKSTEP_CHUNK, integrate_lockstep, lockstep_eligible, lockstep_key
from .parametrization import BOUNDARY_TOL, XI_SATURATION, JointLimits, q_of_xi, xi_of_q
from .trace import SimTrace, TraceRecord

logger = logging.getLogger(__name__)


INTEGRATORS = ("rk4", "semi-implicit-euler")
DEFAULT_DT = 1e-3


# ============================================================================
# Reference trajectories
# ============================================================================

@dataclass(frozen=True, eq=False)
class ReferenceGenerator:
    """
    Desired joint trajectory.

    constant:  q_d(t) = q_d
    sinusoid:  q_d(t) = (δ/r) sin(ωt + ρ) + q_0, which stays inside the box for r > 1
    """
    kind: str
    limits: JointLimits
    q_d: Optional[np.ndarray] = None
    rate_divisor: float = 2.0
    omega: Optional[np.ndarray] = None
    rho: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.limits.n_joints
        if self.kind == "constant":
            if self.q_d is None:
                raise ValueError("a constant reference needs q_d")
            object.__setattr__(self, "q_d", np.array(self.q_d, dtype=float).reshape(n))
        elif self.kind == "sinusoid":
            if not self.rate_divisor > 1.0:
                raise ValueError(f"rate_divisor must exceed 1 to stay inside the limits (got {self.rate_divisor})")
            omega = np.zeros(n) if self.omega is None else np.array(self.omega, dtype=float).reshape(n)
            rho = np.zeros(n) if self.rho is None else np.array(self.rho, dtype=float).reshape(n)
            object.__setattr__(self, "omega", omega)
            object.__setattr__(self, "rho", rho)
        else:
            raise ValueError(f"unknown reference kind '{self.kind}' (expected 'constant' or 'sinusoid')")

    @classmethod
    def constant(cls, limits: JointLimits, q_d) -> "ReferenceGenerator":
        return cls(kind="constant", limits=limits, q_d=q_d)

    @classmethod
    def sinusoid(cls, limits: JointLimits, rate_divisor: float, omega, rho) -> "ReferenceGenerator":
        return cls(kind="sinusoid", limits=limits, rate_divisor=rate_divisor, omega=omega, rho=rho)

    def evaluate(self, t: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(q_d, q̇_d, q̈_d) at time t."""
        if self.kind == "constant":
            zero = np.zeros_like(self.q_d)
            return self.q_d.copy(), zero, zero.copy()
        amplitude = self.limits.half_range / self.rate_divisor
        phase = self.omega * t + self.rho
        q_d = amplitude * np.sin(phase) + self.limits.q0
        q_d_dot = amplitude * self.omega * np.cos(phase)
        q_d_ddot = -amplitude * self.omega ** 2 * np.sin(phase)
        return q_d, q_d_dot, q_d_ddot


def reference_sample(
    gen: ReferenceGenerator,
    t: float,
    strict: bool = True,
    boundary_tol: float = BOUNDARY_TOL,
    xi_saturation: float = XI_SATURATION,
) -> ReferenceSample:
    """
    Reference at time t with its ξ-space triple.

    With strict=False a sample outside the joint box is returned without the
    ξ triple instead of raising (the classical law does not need it).

    Raises:
        ValueError: t < 0
        OutOfFeasibleSpace: strict and q_d(t) outside the box
    """
    if t < 0:
        raise ValueError(f"reference time must be nonnegative (got {t})")
    q_d, q_d_dot, q_d_ddot = gen.evaluate(t)
    if strict or gen.limits.contains(q_d):
        return ReferenceSample.from_joint_space(
            q_d, q_d_dot, q_d_ddot, gen.limits, boundary_tol=boundary_tol, xi_saturation=xi_saturation
        )
    return ReferenceSample.from_joint_space(q_d, q_d_dot, q_d_ddot)


# ============================================================================
# External force
# ============================================================================

@dataclass(frozen=True, eq=False)
class ExternalForceProfile:
    """
    Planar force on the end effector, in the base frame.

    ramp: |F|(t) = min(cap, magnitude_rate·max(0, t − start_time)) along `direction`
    """
    kind: str = "none"
    direction: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0]))
    magnitude_rate: float = 0.0
    start_time: float = 0.0
    cap: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "ramp"):
            raise ValueError(f"unknown force kind '{self.kind}' (expected 'none' or 'ramp')")
        direction = np.array(self.direction, dtype=float).reshape(2)
        norm = float(np.linalg.norm(direction))
        if not norm > 0:
            raise ValueError("force direction must be nonzero")
        if self.magnitude_rate < 0 or self.cap < 0 or self.start_time < 0:
            raise ValueError("force magnitude_rate, cap and start_time must be nonnegative")
        object.__setattr__(self, "direction", direction / norm)

    def magnitude(self, t: float) -> float:
        if self.kind == "none":
            return 0.0
        return float(min(self.cap, self.magnitude_rate * max(0.0, t - self.start_time)))

    def force(self, t: float) -> np.ndarray:
        return self.magnitude(t) * self.direction

    def capped(self, cap: float) -> "ExternalForceProfile":
        return replace(self, cap=float(cap))

    def time_to_reach(self, magnitude: float) -> float:
        """Time at which the ramp first reaches `magnitude`."""
        if self.magnitude_rate <= 0:
            return math.inf
        return self.start_time + magnitude / self.magnitude_rate


# ============================================================================
# Run configuration
# ============================================================================

@dataclass(frozen=True, eq=False)
class SimConfig:
    """
    Everything one closed-loop run needs.

    Attributes:
        model: Plant parameters
        limits: Joint box
        controller: Law, gains and saturation
        reference: Desired trajectory
        q_init, q_dot_init: Initial joint state [rad], [rad/s]
        force: End-effector disturbance
        dt: Step size [s]
        duration: Simulated time [s]; the trace has round(duration/dt) + 1 records
        integrator: "rk4" or "semi-implicit-euler"
        name: Label stored in the trace metadata
    """
    model: ManipulatorModel
    limits: JointLimits
    controller: Controller
    reference: ReferenceGenerator
    q_init: np.ndarray
    q_dot_init: Optional[np.ndarray] = None
    force: ExternalForceProfile = field(default_factory=ExternalForceProfile)
    dt: float = DEFAULT_DT
    duration: float = 10.0
    integrator: str = "rk4"
    name: str = "run"

    def __post_init__(self):
        n = self.model.n_links
        if self.limits.n_joints != n:
            raise ValueError(f"limits describe {self.limits.n_joints} joints, model has {n}")
        if self.controller.gains.Kp.shape != (n, n):
            raise ValueError(f"gains must be {n}x{n}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.duration < 0 or (0 < self.duration < self.dt):
            raise ValueError("duration must be zero or at least dt")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"unknown integrator '{self.integrator}' (expected one of {INTEGRATORS})")
        q_init = np.array(self.q_init, dtype=float).reshape(n)
        q_dot_init = np.zeros(n) if self.q_dot_init is None else np.array(self.q_dot_init, dtype=float).reshape(n)
        object.__setattr__(self, "q_init", q_init)
        object.__setattr__(self, "q_dot_init", q_dot_init)
        if self.controller.law.requires_feasible_space:
            xi_of_q(self.limits, q_init, **self.controller.xi_options)

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def initial_state(self) -> JointState:
        return JointState(self.q_init, self.q_dot_init)

    def with_law(self, law: ControlLaw) -> "SimConfig":
        return replace(self, controller=replace(self.controller, law=ControlLaw(law)))

    def metadata(self) -> dict:
        c = self.controller
        return {
            "name": self.name,
            "law": c.law.value,
            "n_joints": self.model.n_links,
            "q_min": self.limits.q_min.tolist(),
            "q_max": self.limits.q_max.tolist(),
            "Kp": c.gains.Kp.tolist(),
            "Kd": c.gains.Kd.tolist(),
            "tau_max": c.tau_max,
            "approx_coriolis_feedforward": c.approx_coriolis_feedforward,
            "dt": self.dt,
            "duration": self.duration,
            "integrator": self.integrator,
            "reference": self.reference.kind,
            "force": self.force.kind,
        }


# ============================================================================
# Integration
# ============================================================================

@dataclass(frozen=True, eq=False)
class _LoopEval:
    ref: ReferenceSample
    control: ControlOutput
    force: np.ndarray
    q_ddot: np.ndarray


class _ReferenceCache:
    """
    Reference samples of one run. A constant reference is built once; other
    kinds once per distinct stage time (RK4 evaluates t + dt/2 twice, and
    t + dt again as the next step's first stage).
    """

    def __init__(self, config: SimConfig):
        self._config = config
        self._t: Optional[float] = None
        self._sample: Optional[ReferenceSample] = None

    def __call__(self, t: float) -> ReferenceSample:
        constant = self._config.reference.kind == "constant"
        if self._sample is None or (t != self._t and not constant):
            config = self._config
            q_d, q_d_dot, q_d_ddot = config.reference.evaluate(t)
            self._sample = config.controller.reference(config.limits, q_d, q_d_dot, q_d_ddot)
            self._t = t
        return self._sample


def _evaluate(config: SimConfig, t: float, state: JointState, refs: _ReferenceCache) -> _LoopEval:
    """Reference, control torque, external force and resulting q̈ at (t, state)."""
    ref = refs(t)
    terms = dynamics_terms(config.model, state)
    control = config.controller.command(config.model, config.limits, state, ref, terms)
    force = config.force.force(t)
    tau_ext = ee_jacobian(config.model, state.q).T @ force
    with np.errstate(all="ignore"):
        try:
            q_ddot = forward_dynamics(config.model, state, control.tau + tau_ext, terms)
        except np.linalg.LinAlgError as e:
            raise NumericalDivergence(f"singular inertia matrix: {e}", t=t) from e
    return _LoopEval(ref, control, force, q_ddot)


def _advance(config: SimConfig, state: JointState, t: float, first: _LoopEval, refs: _ReferenceCache) -> JointState:
    dt = config.dt
    q, v = state.q, state.q_dot
    a1 = first.q_ddot
    with np.errstate(all="ignore"):
        if config.integrator == "semi-implicit-euler":
            v_next = v + dt * a1
            return JointState(q + dt * v_next, v_next)

        half = 0.5 * dt
        s2 = JointState(q + half * v, v + half * a1)
        a2 = _evaluate(config, t + half, s2, refs).q_ddot
        s3 = JointState(q + half * s2.q_dot, v + half * a2)
        a3 = _evaluate(config, t + half, s3, refs).q_ddot
        s4 = JointState(q + dt * s3.q_dot, v + dt * a3)
        a4 = _evaluate(config, t + dt, s4, refs).q_ddot
        q_next = q + dt / 6.0 * (v + 2.0 * s2.q_dot + 2.0 * s3.q_dot + s4.q_dot)
        v_next = v + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    return JointState(q_next, v_next)


def step(config: SimConfig, state: JointState, t: float) -> JointState:
    """
    Advance the closed loop by one step of config.dt.

    Raises:
        NumericalDivergence: The new state is not finite
        OutOfFeasibleSpace: A ξ-space law was evaluated outside the joint box
    """
    if not state.is_finite():
        raise NumericalDivergence("step called with a non-finite state", t=t)
    refs = _ReferenceCache(config)
    new_state = _advance(config, state, t, _evaluate(config, t, state, refs), refs)
    if not new_state.is_finite():
        raise NumericalDivergence("state became non-finite", t=t + config.dt)
    return new_state


# ============================================================================
# Runs
# ============================================================================

def _record(config: SimConfig, t: float, state: JointState, loop: Optional[_LoopEval], diverged: bool = False) -> TraceRecord:
    n = config.model.n_links
    nan = np.full(n, np.nan)
    controller = config.controller
    limits = config.limits

    if loop is None:
        q_d = config.reference.evaluate(t)[0]
        return TraceRecord(
            t=t, q=state.q, q_dot=state.q_dot, q_d=q_d, xi=nan, xi_err=nan, xi_err_dot=nan,
            tau_raw=nan, tau=nan, force=config.force.force(t), V=math.nan, V_dot_analytic=math.nan,
            margin=limits.margins(state.q), saturated=False, diverged=diverged,
        )

    ref = loop.ref
    xi = xi_err = xi_err_dot = nan
    if ref.has_xi and limits.contains(state.q):
        try:
            err = xi_tracking_error(limits, state, ref, **controller.xi_options)
            xi, xi_err, xi_err_dot = err.xi, err.xi_err, err.xi_err_dot
        except OutOfFeasibleSpace:
            pass

    V = V_dot = math.nan
    if controller.law is ControlLaw.PROPOSED and np.all(np.isfinite(xi)):
        V, V_dot = xi_storage(config.model, limits, controller.gains, xi, xi_err, xi_err_dot)
    elif controller.law is ControlLaw.CLASSICAL:
        V, V_dot = joint_storage(
            config.model, controller.gains, state.q, state.q - ref.q_d, state.q_dot - ref.q_d_dot
        )

    return TraceRecord(
        t=t, q=state.q, q_dot=state.q_dot, q_d=ref.q_d, xi=xi, xi_err=xi_err, xi_err_dot=xi_err_dot,
        tau_raw=loop.control.tau_raw, tau=loop.control.tau, force=loop.force, V=V, V_dot_analytic=V_dot,
        margin=limits.margins(state.q), saturated=loop.control.saturated, diverged=diverged,
    )


def run(config: SimConfig, stop_on_violation: bool = False) -> SimTrace:
    """
    Integrate the closed loop for config.duration.

    On a non-finite state the run stops early; the last record carries the
    offending state and `diverged=True`.

    Args:
        config: Run configuration
        stop_on_violation: Stop after the first record with a margin ≤ 0

    Raises:
        OutOfFeasibleSpace: A ξ-space law met a state or reference outside the
            box; the error carries the simulation time
    """
    trace = SimTrace(n_joints=config.model.n_links, metadata=config.metadata())
    state = config.initial_state
    refs = _ReferenceCache(config)
    saturating = False
    logger.debug("run '%s' (%s law): %d steps of %.1e s", config.name, config.controller.law.value, config.n_steps, config.dt)

    for k in range(config.n_steps + 1):
        t = k * config.dt
        try:
            loop = _evaluate(config, t, state, refs)
        except OutOfFeasibleSpace as e:
            raise e.at_time(t) from e
        except NumericalDivergence as e:
            logger.warning("run '%s' diverged: %s", config.name, e)
            trace.append(_record(config, t, state, None, diverged=True))
            return trace

        trace.append(_record(config, t, state, loop))
        if loop.control.saturated and not saturating:
            logger.info("torque saturation at t = %.3f s (raw %s)", t, np.round(loop.control.tau_raw, 1))
        saturating = loop.control.saturated

        if stop_on_violation and np.any(trace.records[-1].margin <= 0):
            logger.debug("run '%s' stopped at the first violation, t = %.3f s", config.name, t)
            return trace
        if k == config.n_steps:
            break

        try:
            state = _advance(config, state, t, loop, refs)
        except OutOfFeasibleSpace as e:
            raise e.at_time(t) from e
        except NumericalDivergence:
            nan = np.full(config.model.n_links, np.nan)
            state = JointState(nan, nan.copy())
        if not state.is_finite():
            logger.warning("run '%s' diverged at t = %.3f s", config.name, t + config.dt)
            trace.append(_record(config, (k + 1) * config.dt, state, None, diverged=True))
            return trace

    return trace


# ============================================================================
# Breaking force
# ============================================================================

@dataclass(frozen=True)
class BreakingForce:
    """
    Smallest ramp magnitude that drove a margin to zero [N].

    When `broke` is false the ramp reached its cap and `force` is a lower bound.
    """
    law: str
    force: float
    broke: bool
    trials: int = 0

    def describe(self) -> str:
        return f"{self.force:.1f} N" if self.broke else f">= {self.force:.1f} N"


def _violates(config: SimConfig) -> Tuple[bool, float]:
    """(violated, time of first violation) for one capped ramp run."""
    try:
        trace = run(config, stop_on_violation=True)
    except OutOfFeasibleSpace as e:
        return True, e.t if e.t is not None else config.duration
    last = trace.records[-1]
    if np.any(last.margin <= 0):
        return True, last.t
    if trace.diverged:
        return True, last.t
    return False, math.nan


def breaking_force(config: SimConfig, tolerance: float = 0.5, settle_time: float = 2.0) -> Tuple[float, int]:
    """
    Bisect the ramp cap for the smallest force that violates a joint limit.

    Returns:
        (breaking force [N], number of capped ramp runs)

    Raises:
        ValueError: The force profile is not a ramp with positive rate
        ReportsNoBreak: The full ramp up to its cap never violates
    """
    ramp = config.force
    if ramp.kind != "ramp" or ramp.magnitude_rate <= 0:
        raise ValueError("breaking-force search needs a ramp force with positive magnitude_rate")
    law = config.controller.law.value

    def trial(cap: float) -> Tuple[bool, float]:
        duration = ramp.time_to_reach(cap) + settle_time
        return _violates(replace(config, force=ramp.capped(cap), duration=duration))

    violated, t_hit = trial(ramp.cap)
    trials = 1
    if not violated:
        raise ReportsNoBreak(law, ramp.cap)

    lo, hi = 0.0, min(ramp.cap, ramp.magnitude(t_hit))
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        violated, _ = trial(mid)
        trials += 1
        logger.debug("law %s: cap %.2f N -> %s", law, mid, "violation" if violated else "held")
        if violated:
            hi = mid
        else:
            lo = mid
    return hi, trials


def _breaking_force_task(args: Tuple[SimConfig, float, float]) -> BreakingForce:
    config, tolerance, settle_time = args
    law = config.controller.law.value
    try:
        force, trials = breaking_force(config, tolerance, settle_time)
    except ReportsNoBreak as e:
        logger.info("%s (reported as >= cap)", e)
        return BreakingForce(law=law, force=e.cap, broke=False, trials=1)
    return BreakingForce(law=law, force=force, broke=True, trials=trials)


def force_ramp_experiment(
    config: SimConfig,
    laws: Sequence[ControlLaw] = (ControlLaw.CLASSICAL, ControlLaw.PROPOSED),
    tolerance: float = 0.5,
    settle_time: float = 2.0,
    workers: int = 1,
) -> List[BreakingForce]:
    """
    Breaking force per control law under the same reference, gains and ramp.

    Laws run independently and, with workers > 1, in parallel processes.
    """
    tasks = [(config.with_law(law), tolerance, settle_time) for law in laws]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            return list(pool.map(_breaking_force_task, tasks))
    return [_breaking_force_task(task) for task in tasks]


def breaking_force_ratio(numerator: BreakingForce, denominator: BreakingForce) -> float:
    """
    Ratio of two breaking forces (a lower bound when the numerator held to its cap).

    A denominator that broke at 0 N (limit reached before the ramp acted)
    gives inf, or NaN when the numerator broke at 0 N as well.
    """
    if denominator.force == 0.0:
        return math.inf if numerator.force > 0.0 else math.nan
    return numerator.force / denominator.force


# ============================================================================
# Randomised batches
# ============================================================================

@dataclass(frozen=True)
class FuzzRanges:
    """
    Sampling ranges for randomised runs (per joint where a pair is given).

    Initial and constant-reference states are drawn in ξ, zero initial velocity.
    """
    xi_init: Tuple[float, float] = (-1.0, 1.0)
    xi_ref: Tuple[float, float] = (-1.0, 1.0)
    sinusoid_fraction: float = 0.5
    rate_divisor: Tuple[float, float] = (1.5, 3.0)
    omega: Tuple[float, float] = (0.1, 0.5)
    kp: Tuple[Tuple[float, float], ...] = ((10.0, 30.0), (3.0, 6.0))
    kd: Tuple[Tuple[float, float], ...] = ((1.0, 2.0), (0.3, 0.5))


def fuzz_configs(base: SimConfig, count: int, seed: int, ranges: FuzzRanges = FuzzRanges()) -> List[SimConfig]:
    """
    Randomised variants of `base`: feasible initial states, feasible constant or
    sinusoid references and diagonal gains with K_D ≻ 0. Same seed, same list.
    """
    n = base.model.n_links
    if len(ranges.kp) != n or len(ranges.kd) != n:
        raise ValueError(f"gain ranges must list {n} joints")
    rng = np.random.default_rng(seed)
    limits = base.limits
    kp_lo, kp_hi = np.array(ranges.kp).T
    kd_lo, kd_hi = np.array(ranges.kd).T

    configs = []
    for i in range(count):
        q_init = q_of_xi(limits, rng.uniform(*ranges.xi_init, size=n))
        if rng.uniform() < ranges.sinusoid_fraction:
            reference = ReferenceGenerator.sinusoid(
                limits,
                rate_divisor=float(rng.uniform(*ranges.rate_divisor)),
                omega=rng.uniform(*ranges.omega, size=n),
                rho=rng.uniform(-np.pi, np.pi, size=n),
            )
        else:
            reference = ReferenceGenerator.constant(limits, q_of_xi(limits, rng.uniform(*ranges.xi_ref, size=n)))
        gains = ControlGains.diagonal(rng.uniform(kp_lo, kp_hi), rng.uniform(kd_lo, kd_hi))
        configs.append(replace(
            base,
            controller=replace(base.controller, gains=gains),
            reference=reference,
            q_init=q_init,
            q_dot_init=np.zeros(n),
            force=ExternalForceProfile(),
            name=f"{base.name}-{i:03d}",
        ))
    return configs


@dataclass
class BatchResult:
    index: int
    name: str
    report: Optional[RunReport]
    error: Optional[str] = None

    def to_row(self) -> Dict[str, object]:
        row: Dict[str, object] = {"index": self.index, "name": self.name, "error": self.error or ""}
        if self.report is not None:
            row.update(self.report.to_row())
        return row


def _batch_task(args: Tuple[int, SimConfig]) -> BatchResult:
    index, config = args
    try:
        trace = run(config)
    except OutOfFeasibleSpace as e:
        return BatchResult(index, config.name, None, error=str(e))
    return BatchResult(index, config.name, report(trace, config.limits))


def _batch_job(job: Tuple[bool, List[Tuple[int, SimConfig]]]) -> List[BatchResult]:
    """One unit of batch work: a lockstep stack, or a single scalar run."""
    lockstep, tasks = job
    if not lockstep:
        return [_batch_task(task) for task in tasks]
    results = []
    columns = integrate_lockstep([config for _, config in tasks])
    for (index, config), cols in zip(tasks, columns):
        if cols is None:
            results.append(_batch_task((index, config)))
        else:
            results.append(BatchResult(index, config.name, report_columns(cols, config.limits)))
    return results


def _batch_jobs(tasks: List[Tuple[int, SimConfig]], workers: int, lockstep: bool) -> List[Tuple[bool, List[Tuple[int, SimConfig]]]]:
    groups: Dict[tuple, List[Tuple[int, SimConfig]]] = {}
    jobs = []
    for task in tasks:
        if lockstep and lockstep_eligible(task[1]):
            groups.setdefault(lockstep_key(task[1]), []).append(task)
        else:
            jobs.append((False, [task]))
    for group in groups.values():
        size = min(LOCKSTEP_CHUNK, max(1, math.ceil(len(group) / workers)))
        jobs += [(True, group[i:i + size]) for i in range(0, len(group), size)]
    return jobs


def run_batch(configs: Iterable[SimConfig], workers: int = 1, lockstep: bool = True) -> List[BatchResult]:
    """
    Run and report each config; results keep the input order.

    With `lockstep`, eligible two-link runs of the ξ-space tracking law are
    integrated together as stacked arrays (see `lockstep.py`); the rest, and
    any stacked run that leaves the box or diverges, go through `run`.
    """
    tasks = list(enumerate(configs))
    workers = max(1, min(workers, len(tasks), os.cpu_count() or 1))
    jobs = _batch_jobs(tasks, workers, lockstep)
    logger.info("batch of %d runs as %d job(s) on %d worker(s)", len(tasks), len(jobs), workers)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            chunks = list(pool.map(_batch_job, jobs))
    else:
        chunks = [_batch_job(job) for job in jobs]
    return sorted((r for chunk in chunks for r in chunk), key=lambda r: r.index)
