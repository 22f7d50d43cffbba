"""
Static figures from trace files.

Every figure is a function of the trace CSV contents only (data columns plus
the `#` metadata header), so re-plotting a saved trace gives the same image.
"""

import logging
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from matplotlib.axes import Axes  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from .trace import read_trace_csv  # noqa: E402

logger = logging.getLogger(__name__)


LAW_COLORS = {
    "classical": "tab:blue",
    "proposed": "black",
    "setpoint": "tab:purple",
    "substituted": "tab:orange",
    "none": "tab:gray",
}
REFERENCE_COLOR = "tab:green"
LIMIT_COLOR = "tab:red"
JOINT_NAMES = ("hip", "knee")


def _joint_name(i: int) -> str:
    return JOINT_NAMES[i] if i < len(JOINT_NAMES) else f"joint {i + 1}"


def _n_joints(frame: pd.DataFrame) -> int:
    return sum(1 for c in frame.columns if c.startswith("q_dot_"))


def makefig(rows: int, title: Optional[str] = None) -> Tuple[Figure, np.ndarray]:
    fig, axes = plt.subplots(rows, 1, figsize=(8, 2.6 * rows), sharex=True, squeeze=False)
    axes = axes[:, 0]
    for ax in axes:
        ax.grid(alpha=0.25)
    axes[-1].set_xlabel("t [s]")
    if title:
        fig.suptitle(title)
    fig.set_dpi(120)
    return fig, axes


def save_plot(fig: Figure, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    logger.info("wrote %s", path)
    return path


def _plot_joint(ax: Axes, i: int, traces: Mapping[str, pd.DataFrame], metadata: Mapping) -> None:
    first = next(iter(traces.values()))
    t = first["t"].to_numpy()
    ax.plot(t, np.rad2deg(first[f"q_d_{i + 1}"].to_numpy()), color=REFERENCE_COLOR, lw=1.2, label="reference")
    for law, frame in traces.items():
        ax.plot(
            frame["t"].to_numpy(),
            np.rad2deg(frame[f"q_{i + 1}"].to_numpy()),
            color=LAW_COLORS.get(law),
            lw=1.0,
            label=law,
        )
    if "q_min" in metadata and "q_max" in metadata:
        for bound in (metadata["q_min"][i], metadata["q_max"][i]):
            ax.axhline(np.rad2deg(bound), color=LIMIT_COLOR, ls="--", lw=0.8)
    ax.set_ylabel(f"{_joint_name(i)} [deg]")


def plot_joints_and_torques(
    traces: Mapping[str, pd.DataFrame],
    metadata: Mapping,
    path: Union[str, Path],
    title: Optional[str] = None,
) -> Path:
    """Joint angles with reference and limit lines, then torques, one panel per joint."""
    n = _n_joints(next(iter(traces.values())))
    fig, axes = makefig(2 * n, title)
    for i in range(n):
        _plot_joint(axes[i], i, traces, metadata)
        ax = axes[n + i]
        for law, frame in traces.items():
            ax.plot(frame["t"].to_numpy(), frame[f"tau_{i + 1}"].to_numpy(), color=LAW_COLORS.get(law), lw=1.0, label=law)
        ax.set_ylabel(f"tau {_joint_name(i)} [N m]")
    axes[0].legend(loc="upper right", fontsize="small")
    return save_plot(fig, path)


def plot_force_and_lyapunov(frame: pd.DataFrame, metadata: Mapping, path: Union[str, Path], title: Optional[str] = None) -> Path:
    """External force magnitude, V and its numeric derivative, and the limit margins."""
    n = _n_joints(frame)
    t = frame["t"].to_numpy()
    fig, axes = makefig(3, title)
    axes[0].plot(t, np.hypot(frame["f_x"].to_numpy(), frame["f_y"].to_numpy()), color="tab:brown")
    axes[0].set_ylabel("|F| [N]")
    axes[1].plot(t, frame["V"].to_numpy(), color="black", lw=1.0, label="V")
    axes[1].set_ylabel("V [J]")
    twin = axes[1].twinx()
    twin.plot(t, frame["V_dot_numeric"].to_numpy(), color="tab:gray", lw=0.8, label="dV/dt")
    twin.set_ylabel("dV/dt [J/s]")
    for i in range(n):
        axes[2].plot(t, np.rad2deg(frame[f"margin_{i + 1}"].to_numpy()), lw=1.0, label=_joint_name(i))
    axes[2].axhline(0.0, color=LIMIT_COLOR, ls="--", lw=0.8)
    axes[2].set_ylabel("margin [deg]")
    axes[2].legend(loc="upper right", fontsize="small")
    return save_plot(fig, path)


def plot_trace_file(trace_path: Union[str, Path], out_dir: Optional[Union[str, Path]] = None) -> List[Path]:
    """Render the figures for one saved trace next to it (or into out_dir)."""
    trace_path = Path(trace_path)
    frame, metadata = read_trace_csv(trace_path)
    out_dir = Path(out_dir) if out_dir else trace_path.parent
    law = str(metadata.get("law", "trace"))
    title = f"{metadata.get('name', trace_path.stem)} ({law})"
    return [
        plot_joints_and_torques({law: frame}, metadata, out_dir / f"{trace_path.stem}_joints.png", title),
        plot_force_and_lyapunov(frame, metadata, out_dir / f"{trace_path.stem}_force_lyapunov.png", title),
    ]


def plot_comparison(trace_paths: Dict[str, Union[str, Path]], path: Union[str, Path], title: Optional[str] = None) -> Path:
    """Overlay several saved traces (one per law) of the same experiment."""
    traces: Dict[str, pd.DataFrame] = {}
    metadata: Mapping = {}
    for law, trace_path in trace_paths.items():
        frame, metadata = read_trace_csv(trace_path)
        traces[law] = frame
    return plot_joints_and_torques(traces, metadata, path, title)
