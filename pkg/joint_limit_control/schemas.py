"""
Pydantic schemas for experiment config files.

Config files are JSON. Angles are given in degrees (q, limits, phases,
initial velocities in deg/s); everything else is SI. Unknown keys are
rejected. `ExperimentConfig.to_sim_config` converts to the runtime objects of
`simulation`, switching to radians in one place.
"""

import json
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .control import DEFAULT_TAU_MAX, ControlGains, ControlLaw, Controller
from .dynamics import DEFAULT_GRAVITY, ManipulatorModel
from .exceptions import ConfigError, OutOfFeasibleSpace
from .parametrization import BOUNDARY_TOL, XI_SATURATION, JointLimits
from .simulation import DEFAULT_DT, ExternalForceProfile, FuzzRanges, ReferenceGenerator, SimConfig


LawName = Literal["classical", "proposed", "setpoint", "substituted", "none"]
GainSpec = Union[List[float], List[List[float]]]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Section):
    """
    Planar arm parameters. Defaults give the two-link desk model.
    COM offsets default to mid-link and inertias to m·l²/12.
    """
    link_mass: List[float] = Field(default=[2.0, 1.0], description="Link masses [kg]")
    link_length: List[float] = Field(default=[0.4, 0.4], description="Link lengths [m]")
    com_offset: Optional[List[float]] = Field(None, description="Joint-to-COM distances [m]")
    link_inertia: Optional[List[float]] = Field(None, description="COM inertias about z [kg·m²]")
    gravity: float = Field(default=DEFAULT_GRAVITY, ge=0.0, description="Gravity along -y [m/s²]")
    friction: Optional[List[float]] = Field(None, description="Viscous joint friction [N·m·s/rad]")

    def build(self) -> ManipulatorModel:
        mass = np.asarray(self.link_mass, dtype=float)
        length = np.asarray(self.link_length, dtype=float)
        return ManipulatorModel(
            link_mass=mass,
            link_length=length,
            com_offset=length / 2.0 if self.com_offset is None else self.com_offset,
            link_inertia=mass * length ** 2 / 12.0 if self.link_inertia is None else self.link_inertia,
            gravity=self.gravity,
            friction=self.friction,
        )


class LimitsSection(_Section):
    q_min: List[float] = Field(..., description="Lower joint limits [deg]")
    q_max: List[float] = Field(..., description="Upper joint limits [deg]")

    @model_validator(mode="after")
    def _check_range(self):
        if len(self.q_min) != len(self.q_max):
            raise ValueError("q_min and q_max must list the same joints")
        bad = [i for i, (lo, hi) in enumerate(zip(self.q_min, self.q_max)) if not hi > lo]
        if bad:
            raise ValueError(f"joints {bad} need q_max > q_min (a zero range leaves no feasible space)")
        return self

    def build(self) -> JointLimits:
        return JointLimits.from_degrees(self.q_min, self.q_max)


class InitialSection(_Section):
    q_deg: List[float] = Field(..., description="Initial joint angles [deg]")
    q_dot_deg: Optional[List[float]] = Field(None, description="Initial joint velocities [deg/s], default zero")


class ControllerSection(_Section):
    """
    Gains are diagonals (list) or full matrices (list of rows). For the
    set-point law they are K'_P, K'_D.
    """
    law: LawName = Field(default="proposed", description="classical | proposed | setpoint | substituted | none")
    kp: GainSpec = Field(..., description="Proportional gains")
    kd: GainSpec = Field(..., description="Derivative gains")
    tau_max: float = Field(default=DEFAULT_TAU_MAX, gt=0.0, description="Torque saturation [N·m]")
    xi_saturation: float = Field(default=XI_SATURATION, gt=0.0, description="Clamp for ξ")
    boundary_tol: float = Field(default=BOUNDARY_TOL, ge=0.0, description="xi_of_q rejection distance [rad]")
    approx_coriolis_feedforward: bool = Field(default=False, description="Use C(q, q̇_d)q̇_d in the feedforward")

    @model_validator(mode="after")
    def _check_gains(self):
        self.gains()
        return self

    def gains(self) -> ControlGains:
        kp, kd = np.asarray(self.kp, dtype=float), np.asarray(self.kd, dtype=float)
        return ControlGains(np.diag(kp) if kp.ndim == 1 else kp, np.diag(kd) if kd.ndim == 1 else kd)

    def build(self, law: Optional[str] = None) -> Controller:
        return Controller(
            law=ControlLaw(law or self.law),
            gains=self.gains(),
            tau_max=self.tau_max,
            xi_saturation=self.xi_saturation,
            boundary_tol=self.boundary_tol,
            approx_coriolis_feedforward=self.approx_coriolis_feedforward,
        )


class ReferenceSection(_Section):
    """
    constant: q_deg. sinusoid: q_d(t) = (δ/r) sin(ωt + ρ) + q_0 with ω in rad/s.
    """
    kind: Literal["constant", "sinusoid"] = "constant"
    q_deg: Optional[List[float]] = Field(None, description="Constant reference [deg]")
    rate_divisor: Optional[float] = Field(None, gt=1.0, description="r > 1; amplitude δ/r")
    omega: Optional[List[float]] = Field(None, description="Angular frequencies [rad/s]")
    rho_deg: Optional[List[float]] = Field(None, description="Phases [deg]")

    @model_validator(mode="after")
    def _check_kind(self):
        if self.kind == "constant" and self.q_deg is None:
            raise ValueError("a constant reference needs q_deg")
        if self.kind == "sinusoid" and (self.rate_divisor is None or self.omega is None):
            raise ValueError("a sinusoid reference needs rate_divisor and omega")
        return self

    def build(self, limits: JointLimits) -> ReferenceGenerator:
        if self.kind == "constant":
            return ReferenceGenerator.constant(limits, np.deg2rad(self.q_deg))
        rho = np.zeros(limits.n_joints) if self.rho_deg is None else np.deg2rad(self.rho_deg)
        return ReferenceGenerator.sinusoid(limits, self.rate_divisor, self.omega, rho)


class ForceSection(_Section):
    kind: Literal["none", "ramp"] = "none"
    direction: List[float] = Field(default=[0.0, 1.0], description="Force direction in the base frame")
    magnitude_rate: float = Field(default=0.0, ge=0.0, description="Ramp rate [N/s]")
    start_time: float = Field(default=0.0, ge=0.0, description="Ramp start [s]")
    cap: float = Field(default=0.0, ge=0.0, description="Maximum magnitude [N]")
    settle_time: float = Field(default=2.0, ge=0.0, description="Hold time after each bisection ramp [s]")
    tolerance: float = Field(default=0.5, gt=0.0, description="Breaking-force bisection tolerance [N]")

    def build(self) -> ExternalForceProfile:
        return ExternalForceProfile(
            kind=self.kind,
            direction=self.direction,
            magnitude_rate=self.magnitude_rate,
            start_time=self.start_time,
            cap=self.cap,
        )


class SimSection(_Section):
    dt: float = Field(default=DEFAULT_DT, gt=0.0, description="Step size [s]")
    duration: float = Field(default=10.0, ge=0.0, description="Simulated time [s]")
    integrator: Literal["rk4", "semi-implicit-euler"] = "rk4"


class OutputSection(_Section):
    out_dir: Optional[str] = Field(None, description="Artifact directory (default: JLC_OUT_DIR)")
    plots: bool = True
    write_trace: bool = True


class BatchSection(_Section):
    """Randomised runs around the base config (see simulation.FuzzRanges)."""
    count: int = Field(default=200, ge=1)
    xi_init: Tuple[float, float] = (-1.0, 1.0)
    xi_ref: Tuple[float, float] = (-1.0, 1.0)
    sinusoid_fraction: float = Field(default=0.5, ge=0.0, le=1.0)
    rate_divisor: Tuple[float, float] = (1.5, 3.0)
    omega: Tuple[float, float] = (0.1, 0.5)
    kp: List[Tuple[float, float]] = Field(default=[(10.0, 30.0), (3.0, 6.0)], description="Per-joint K_P range")
    kd: List[Tuple[float, float]] = Field(default=[(1.0, 2.0), (0.3, 0.5)], description="Per-joint K_D range, > 0")

    def ranges(self) -> FuzzRanges:
        return FuzzRanges(
            xi_init=self.xi_init,
            xi_ref=self.xi_ref,
            sinusoid_fraction=self.sinusoid_fraction,
            rate_divisor=self.rate_divisor,
            omega=self.omega,
            kp=tuple(self.kp),
            kd=tuple(self.kd),
        )


class ExperimentConfig(_Section):
    """
    One experiment: plant, limits, initial state, controller, reference,
    disturbance, integration settings and outputs.
    """
    name: str = Field(..., description="Experiment name, used for artifact file names")
    description: str = ""
    model: ModelSection = Field(default_factory=ModelSection)
    limits_deg: LimitsSection
    initial: InitialSection
    controller: ControllerSection
    reference: ReferenceSection
    force: ForceSection = Field(default_factory=ForceSection)
    sim: SimSection = Field(default_factory=SimSection)
    compare_laws: List[LawName] = Field(default=["classical", "proposed"])
    output: OutputSection = Field(default_factory=OutputSection)
    seed: int = 0
    batch: Optional[BatchSection] = None

    @model_validator(mode="after")
    def _check_dimensions(self):
        n = len(self.model.link_mass)
        sized = {
            "model.link_length": self.model.link_length,
            "limits_deg.q_min": self.limits_deg.q_min,
            "initial.q_deg": self.initial.q_deg,
            "initial.q_dot_deg": self.initial.q_dot_deg,
            "reference.q_deg": self.reference.q_deg,
            "reference.omega": self.reference.omega,
            "reference.rho_deg": self.reference.rho_deg,
        }
        for key, value in sized.items():
            if value is not None and len(value) != n:
                raise ValueError(f"{key} has {len(value)} entries, the model has {n} joints")
        if np.asarray(self.controller.kp).shape[0] != n:
            raise ValueError(f"controller gains must be sized for {n} joints")
        return self

    def to_sim_config(self, law: Optional[str] = None, dt: Optional[float] = None) -> SimConfig:
        """
        Runtime configuration, optionally overriding the law and step size.

        Raises:
            OutOfFeasibleSpace: A ξ-space law with the initial state outside the limits
            ConfigError: The runtime objects reject the values
        """
        try:
            limits = self.limits_deg.build()
            q_dot = None if self.initial.q_dot_deg is None else np.deg2rad(self.initial.q_dot_deg)
            return SimConfig(
                model=self.model.build(),
                limits=limits,
                controller=self.controller.build(law),
                reference=self.reference.build(limits),
                q_init=np.deg2rad(self.initial.q_deg),
                q_dot_init=q_dot,
                force=self.force.build(),
                dt=self.sim.dt if dt is None else dt,
                duration=self.sim.duration,
                integrator=self.sim.integrator,
                name=self.name,
            )
        except OutOfFeasibleSpace:
            raise
        except ValueError as e:
            raise ConfigError(f"{self.name}: {e}") from e


def _format_validation_error(path: Path, error: ValidationError) -> str:
    lines = [f"{path}: {error.error_count()} validation error(s)"]
    for item in error.errors():
        loc = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"  {loc}: {item['msg']}")
    return "\n".join(lines)


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Read and validate a config file.

    Raises:
        ConfigError: Unreadable file, JSON syntax error (with line/column) or
            schema violation (with key path)
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(_format_validation_error(path, e)) from e


def resolve_config_path(name_or_path: str, presets_dir: Union[str, Path]) -> Path:
    """A path to an existing file, or the name of a shipped preset."""
    candidate = Path(name_or_path)
    if candidate.is_file():
        return candidate
    preset = Path(presets_dir) / f"{candidate.stem if candidate.suffix == '.json' else name_or_path}.json"
    if preset.is_file():
        return preset
    raise ConfigError(f"no config file '{name_or_path}' and no preset of that name in {presets_dir}")
