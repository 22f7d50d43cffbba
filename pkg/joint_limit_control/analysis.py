"""
Verification of closed-loop runs.

- Storage (Lyapunov) functions evaluated per record:
      ξ-space laws:  V = ½ ξ̃̇ᵀ M_ξ ξ̃̇ + ½ ξ̃ᵀ K_P ξ̃,   V̇ = −ξ̃̇ᵀ K_D ξ̃̇
      classical law: V = ½ q̃̇ᵀ M q̃̇ + ½ q̃ᵀ K_P q̃,     V̇ = −q̃̇ᵀ K_D q̃̇
- A probe showing V grows without bound along rays in (ξ̃, ξ̃̇) even though
  M_ξ vanishes at the joint limits.
- Run reports: limit margins, tracking errors, torque extremes, numeric
  V̇ monotonicity and tail statistics.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .control import ControlGains
from .dynamics import ManipulatorModel, mass_matrix
from .exceptions import EmptyTrace
from .parametrization import JointLimits, jacobian_diagonal, q_of_xi
from .trace import SimTrace, TraceRecord, numeric_v_dot

logger = logging.getLogger(__name__)


CONVERGENCE_TOL = 1e-3
WARMUP_STEPS = 10
MONOTONICITY_REL_TOL = 1e-6
TAIL_WINDOW = 1.0
TAIL_V_DOT_TOL = 1e-5


# ============================================================================
# Storage functions
# ============================================================================

@dataclass(frozen=True)
class LyapunovSample:
    """V [J], its analytic derivative and (when known) its central-difference derivative [J/s]."""
    V: float
    V_dot_analytic: float
    V_dot_numeric: float = math.nan


def xi_storage(
    model: ManipulatorModel,
    limits: JointLimits,
    gains: ControlGains,
    xi: np.ndarray,
    xi_err: np.ndarray,
    xi_err_dot: np.ndarray,
) -> Tuple[float, float]:
    """(V, V̇_analytic) of the ξ-space tracking law at ξ, with M_ξ = J M(q(ξ)) J."""
    J = jacobian_diagonal(limits, xi)
    M_xi = J[:, None] * mass_matrix(model, q_of_xi(limits, xi)) * J[None, :]
    V = 0.5 * xi_err_dot @ M_xi @ xi_err_dot + 0.5 * xi_err @ gains.Kp @ xi_err
    V_dot = -(xi_err_dot @ gains.Kd @ xi_err_dot)
    return float(V), float(V_dot)


def joint_storage(
    model: ManipulatorModel,
    gains: ControlGains,
    q: np.ndarray,
    q_err: np.ndarray,
    q_err_dot: np.ndarray,
) -> Tuple[float, float]:
    """(V, V̇_analytic) of the classical tracking law."""
    M = mass_matrix(model, q)
    V = 0.5 * q_err_dot @ M @ q_err_dot + 0.5 * q_err @ gains.Kp @ q_err
    V_dot = -(q_err_dot @ gains.Kd @ q_err_dot)
    return float(V), float(V_dot)


def lyapunov(
    record: TraceRecord,
    gains: ControlGains,
    limits: JointLimits,
    model: ManipulatorModel,
    V_dot_numeric: float = math.nan,
) -> LyapunovSample:
    """
    Lyapunov sample of a ξ-space tracking record.

    M_ξ is evaluated at the record's ξ. Records taken outside the joint box
    carry NaN ξ fields and yield NaN.
    """
    xi = np.asarray(record.xi, dtype=float)
    if not np.all(np.isfinite(xi)):
        return LyapunovSample(math.nan, math.nan, V_dot_numeric)
    V, V_dot = xi_storage(model, limits, gains, xi, np.asarray(record.xi_err), np.asarray(record.xi_err_dot))
    return LyapunovSample(V, V_dot, V_dot_numeric)


def lyapunov_series(
    trace: SimTrace,
    gains: ControlGains,
    limits: JointLimits,
    model: ManipulatorModel,
) -> List[LyapunovSample]:
    """Recompute V along a trace and attach central-difference V̇."""
    samples = [lyapunov(r, gains, limits, model) for r in trace.records]
    if not samples:
        return samples
    t = trace.t
    V_dot_num = numeric_v_dot(t, np.array([s.V for s in samples]))
    return [LyapunovSample(s.V, s.V_dot_analytic, float(d)) for s, d in zip(samples, V_dot_num)]


# ============================================================================
# Radial unboundedness
# ============================================================================

@dataclass
class RayResult:
    """
    V sampled along s·(a, b) for s in `s`, with ξ̃ = s·a and ξ̃̇ = s·b.

    kind is "position" (b = 0), "velocity" (a = 0) or "mixed". The floor
    constant c gives V(s) ≥ c·s² along the ray.
    """
    kind: str
    direction: np.ndarray
    s: np.ndarray
    V: np.ndarray
    floor_constant: float
    monotone: bool
    floor_ok: bool
    growth_ok: bool


@dataclass
class RadialProbeReport:
    xi_ref: np.ndarray
    s_max: float
    rays: List[RayResult] = field(default_factory=list)

    @property
    def all_floor_ok(self) -> bool:
        return all(r.floor_ok for r in self.rays)

    @property
    def all_growth_ok(self) -> bool:
        return all(r.growth_ok for r in self.rays)

    @property
    def pure_rays_monotone(self) -> bool:
        return all(r.monotone for r in self.rays if r.kind != "mixed")

    @property
    def passed(self) -> bool:
        return self.all_floor_ok and self.all_growth_ok and self.pure_rays_monotone


def radial_unboundedness_probe(
    gains: ControlGains,
    limits: JointLimits,
    model: ManipulatorModel,
    ray_count: int = 32,
    xi_ref: Optional[np.ndarray] = None,
    s_max: float = 1e3,
    points_per_ray: int = 50,
    seed: int = 0,
) -> RadialProbeReport:
    """
    Sample V along rays in (ξ̃, ξ̃̇) out to norm s_max, around ξ_d = xi_ref.

    Besides `ray_count` random mixed directions, every position axis and every
    velocity axis is probed. Along position rays V is exactly ½s²aᵀK_Pa; along
    velocity rays ξ stays at xi_ref and V = ½s²bᵀM_ξ(xi_ref)b, which keeps
    growing even when xi_ref is close to a limit and M_ξ is tiny.
    """
    n = limits.n_joints
    xi_ref = np.zeros(n) if xi_ref is None else np.asarray(xi_ref, dtype=float)
    rng = np.random.default_rng(seed)
    s = np.geomspace(1e-3, s_max, points_per_ray)
    if s[-1] != s_max:
        s[-1] = s_max

    directions: List[Tuple[str, np.ndarray]] = []
    for i in range(n):
        directions.append(("position", np.eye(2 * n)[i]))
    for i in range(n):
        directions.append(("velocity", np.eye(2 * n)[n + i]))
    for _ in range(ray_count):
        u = rng.standard_normal(2 * n)
        directions.append(("mixed", u / np.linalg.norm(u)))

    report = RadialProbeReport(xi_ref=xi_ref, s_max=float(s_max))
    for kind, u in directions:
        a, b = u[:n], u[n:]
        V = np.array([xi_storage(model, limits, gains, xi_ref + sk * a, sk * a, sk * b)[0] for sk in s])
        if kind == "velocity":
            J = jacobian_diagonal(limits, xi_ref)
            M_xi = J[:, None] * mass_matrix(model, q_of_xi(limits, xi_ref)) * J[None, :]
            c = 0.5 * float(b @ M_xi @ b)
        else:
            c = 0.5 * float(a @ gains.Kp @ a)
        rel = 1e-9
        report.rays.append(RayResult(
            kind=kind,
            direction=u,
            s=s,
            V=V,
            floor_constant=c,
            monotone=bool(np.all(np.diff(V) >= -rel * np.abs(V[1:]))),
            floor_ok=bool(c > 0 and np.all(V >= (1 - rel) * c * s ** 2)),
            growth_ok=bool(V[-1] >= (1 - rel) * 1e6 * c),
        ))
    logger.debug("radial probe: %d rays, passed=%s", len(report.rays), report.passed)
    return report


# ============================================================================
# Run reports
# ============================================================================

@dataclass
class RunReport:
    """
    Summary of one trace.

    `violation` is true iff some recorded margin is ≤ 0. `violation_episodes`
    counts entries into violation. Monotonicity statistics skip the first
    WARMUP_STEPS records; the tolerance is MONOTONICITY_REL_TOL·max V.
    """
    law: str
    n_records: int
    t_final: float
    min_margin: np.ndarray
    violation: bool
    violation_episodes: int
    final_q_err: float
    final_xi_err: float
    final_xi_err_dot: float
    max_abs_tau: float
    max_abs_tau_raw: float
    saturation_count: int
    monotonicity_violations: int
    worst_monotonicity: float
    analytic_v_dot_max: float
    tail_max_abs_v_dot: float
    tail_max_xi_err_dot: float
    tail_max_xi_err_ddot: float
    converged: bool
    diverged: bool

    @property
    def barbalat_tail_ok(self) -> bool:
        return bool(self.tail_max_abs_v_dot < TAIL_V_DOT_TOL) or math.isnan(self.tail_max_abs_v_dot)

    def to_row(self) -> Dict[str, object]:
        """Flat dict for a CSV summary row."""
        row = asdict(self)
        margins = row.pop("min_margin")
        for i, m in enumerate(np.asarray(margins).tolist()):
            row[f"min_margin_{i + 1}"] = m
        return row

    def to_text(self) -> str:
        margins = ", ".join(f"{np.rad2deg(m):.3f}" for m in self.min_margin)
        lines = [
            f"law:                    {self.law}",
            f"records:                {self.n_records} (t_final = {self.t_final:.3f} s)",
            f"min margin [deg]:       [{margins}]",
            f"violation:              {self.violation} ({self.violation_episodes} episode(s))",
            f"final |q~| [rad]:       {self.final_q_err:.3e}",
            f"final |xi~|:            {self.final_xi_err:.3e}",
            f"final |xi~'| [1/s]:     {self.final_xi_err_dot:.3e}",
            f"max |tau| [N*m]:        {self.max_abs_tau:.3f} (raw {self.max_abs_tau_raw:.3f}, saturated {self.saturation_count}x)",
            f"V monotonicity:         {self.monotonicity_violations} violation(s), worst {self.worst_monotonicity:.3e} J/s",
            f"tail max |V'| [J/s]:    {self.tail_max_abs_v_dot:.3e}",
            f"converged:              {self.converged}",
            f"diverged:               {self.diverged}",
        ]
        return "\n".join(lines)


def _norm_rows(x: np.ndarray) -> np.ndarray:
    return np.linalg.norm(x, axis=1)


def _nanmax(x: np.ndarray, default: float = math.nan) -> float:
    x = np.asarray(x, dtype=float)
    finite = x[np.isfinite(x)]
    return float(finite.max()) if finite.size else default


def _nanmin_col(x: np.ndarray) -> float:
    finite = x[np.isfinite(x)]
    return float(finite.min()) if finite.size else math.nan


@dataclass(frozen=True, eq=False)
class TraceColumns:
    """
    Per-record arrays of one run: the part of a trace a report reads.

    Vector fields have shape (N, n), scalar fields (N,).
    """
    law: str
    t: np.ndarray
    q: np.ndarray
    q_d: np.ndarray
    xi_err: np.ndarray
    xi_err_dot: np.ndarray
    tau: np.ndarray
    tau_raw: np.ndarray
    V: np.ndarray
    V_dot_analytic: np.ndarray
    saturated: np.ndarray
    diverged: bool = False

    @classmethod
    def from_trace(cls, trace: SimTrace) -> "TraceColumns":
        return cls(
            law=str(trace.metadata.get("law", "unknown")),
            t=trace.t,
            q=trace.column("q"),
            q_d=trace.column("q_d"),
            xi_err=trace.column("xi_err"),
            xi_err_dot=trace.column("xi_err_dot"),
            tau=trace.column("tau"),
            tau_raw=trace.column("tau_raw"),
            V=trace.V,
            V_dot_analytic=trace.column("V_dot_analytic"),
            saturated=np.array([r.saturated for r in trace.records], dtype=bool),
            diverged=trace.diverged,
        )

    def __len__(self) -> int:
        return int(self.t.shape[0])


def report(
    trace: SimTrace,
    limits: JointLimits,
    convergence_tol: float = CONVERGENCE_TOL,
    warmup_steps: int = WARMUP_STEPS,
    tail_window: float = TAIL_WINDOW,
) -> RunReport:
    """
    Aggregate a trace into a RunReport.

    Margins are recomputed from q against `limits`, so a trace built by hand
    with an out-of-bounds q is reported as a violation.

    Raises:
        EmptyTrace: The trace has no records
    """
    if len(trace) == 0:
        raise EmptyTrace("cannot report on an empty trace")
    return report_columns(TraceColumns.from_trace(trace), limits, convergence_tol, warmup_steps, tail_window)


def report_columns(
    columns: TraceColumns,
    limits: JointLimits,
    convergence_tol: float = CONVERGENCE_TOL,
    warmup_steps: int = WARMUP_STEPS,
    tail_window: float = TAIL_WINDOW,
) -> RunReport:
    """
    `report` for runs held as column arrays (lockstep batches).

    Raises:
        EmptyTrace: No records
    """
    if len(columns) == 0:
        raise EmptyTrace("cannot report on an empty trace")

    t = columns.t
    q = columns.q
    margins = limits.margins(q)
    finite_rows = np.all(np.isfinite(margins), axis=1)
    violated_rows = np.any(margins <= 0, axis=1) & finite_rows
    entries = np.diff(np.concatenate([[False], violated_rows]).astype(int))
    min_margin = np.array([_nanmin_col(margins[:, j]) for j in range(margins.shape[1])])

    q_err = q - columns.q_d
    xi_err = columns.xi_err
    xi_err_dot = columns.xi_err_dot
    tau = columns.tau
    tau_raw = columns.tau_raw

    V = columns.V
    V_dot_num = numeric_v_dot(t, V)
    max_V = _nanmax(V, default=0.0)
    tol = MONOTONICITY_REL_TOL * max_V
    checked = V_dot_num[warmup_steps:]
    excess = checked[np.isfinite(checked) & (checked > tol)]

    tail = t >= t[-1] - tail_window
    tail_v_dot = np.abs(V_dot_num[tail])
    tail_xi_err_dot = _norm_rows(xi_err_dot[tail])
    xi_err_ddot = np.full_like(xi_err_dot, np.nan)
    if len(t) >= 3:
        xi_err_ddot[1:-1] = (xi_err_dot[2:] - xi_err_dot[:-2]) / (t[2:] - t[:-2])[:, None]

    final_xi_err = float(np.linalg.norm(xi_err[-1]))
    final_xi_err_dot = float(np.linalg.norm(xi_err_dot[-1]))
    result = RunReport(
        law=columns.law,
        n_records=len(columns),
        t_final=float(t[-1]),
        min_margin=min_margin,
        violation=bool(violated_rows.any()),
        violation_episodes=int(np.sum(entries == 1)),
        final_q_err=float(np.linalg.norm(q_err[-1])),
        final_xi_err=final_xi_err,
        final_xi_err_dot=final_xi_err_dot,
        max_abs_tau=_nanmax(np.abs(tau), default=0.0),
        max_abs_tau_raw=_nanmax(np.abs(tau_raw), default=0.0),
        saturation_count=int(np.count_nonzero(columns.saturated)),
        monotonicity_violations=int(excess.size),
        worst_monotonicity=float(excess.max()) if excess.size else 0.0,
        analytic_v_dot_max=_nanmax(columns.V_dot_analytic),
        tail_max_abs_v_dot=_nanmax(tail_v_dot),
        tail_max_xi_err_dot=_nanmax(tail_xi_err_dot),
        tail_max_xi_err_ddot=_nanmax(_norm_rows(xi_err_ddot[tail])),
        converged=bool(final_xi_err < convergence_tol and final_xi_err_dot < convergence_tol),
        diverged=bool(columns.diverged),
    )
    if result.violation:
        logger.info("trace violates the joint limits in %d episode(s)", result.violation_episodes)
    return result
