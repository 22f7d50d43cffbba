import numpy as np
import pytest

from joint_limit_control.control import ControlGains, Controller
from joint_limit_control.dynamics import ManipulatorModel, desk_model
from joint_limit_control.parametrization import JointLimits
from joint_limit_control.simulation import ReferenceGenerator, SimConfig


@pytest.fixture
def desk() -> ManipulatorModel:
    return desk_model()


@pytest.fixture
def limits() -> JointLimits:
    """Hip [-30, 85] deg, knee [-100, 0] deg."""
    return JointLimits.from_degrees([-30.0, -100.0], [85.0, 0.0])


@pytest.fixture
def point_mass() -> ManipulatorModel:
    """Two unit point masses at the ends of unit links."""
    return ManipulatorModel(
        link_mass=[1.0, 1.0],
        link_length=[1.0, 1.0],
        com_offset=[1.0, 1.0],
        link_inertia=[0.0, 0.0],
        gravity=9.81,
    )


@pytest.fixture
def three_link() -> ManipulatorModel:
    return ManipulatorModel(
        link_mass=[1.5, 1.0, 0.5],
        link_length=[0.5, 0.4, 0.3],
        com_offset=[0.2, 0.25, 0.1],
        link_inertia=[0.03, 0.015, 0.004],
        gravity=9.81,
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def setpoint_config(desk, limits):
    """Gentle, well-damped set-point run of the proposed law."""

    def make(law: str = "proposed", duration: float = 3.0, **overrides) -> SimConfig:
        params = dict(
            model=desk,
            limits=limits,
            controller=Controller(law, ControlGains.diagonal([20.0, 5.0], [2.0, 0.5])),
            reference=ReferenceGenerator.constant(limits, np.deg2rad([30.0, -60.0])),
            q_init=np.deg2rad([10.0, -40.0]),
            dt=1e-3,
            duration=duration,
            name="setpoint",
        )
        params.update(overrides)
        return SimConfig(**params)

    return make
