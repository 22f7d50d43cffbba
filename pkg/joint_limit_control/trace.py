"""
Simulation traces and their CSV form.

A trace is the per-step log of a closed-loop run. On disk it is a CSV file
(radians, SI units) preceded by `#`-prefixed metadata lines holding JSON
values, so reports and plots can be rebuilt from the file alone:

    # format: joint-limit-control trace v1
    # units: {"angle": "rad", ...}
    # law: "proposed"
    # q_min: [...]
    t,q_1,q_2,q_dot_1,...

Column order is fixed (see `trace_columns`).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)


TRACE_FORMAT = "joint-limit-control trace v1"

UNITS = {
    "t": "s",
    "angle": "rad",
    "angular_velocity": "rad/s",
    "xi": "1",
    "torque": "N*m",
    "force": "N",
    "V": "J",
    "V_dot": "J/s",
}

_VECTOR_FIELDS = ("q", "q_dot", "q_d", "xi", "xi_err", "xi_err_dot", "tau_raw", "tau")


def trace_columns(n_joints: int) -> List[str]:
    """CSV column order for an n-joint trace."""
    columns = ["t"]
    for name in _VECTOR_FIELDS:
        columns += [f"{name}_{i + 1}" for i in range(n_joints)]
    columns += ["f_x", "f_y", "V", "V_dot_analytic", "V_dot_numeric"]
    columns += [f"margin_{i + 1}" for i in range(n_joints)]
    columns += ["saturated", "diverged"]
    return columns


def numeric_v_dot(t: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Central-difference dV/dt; the first and last entries are NaN."""
    t = np.asarray(t, dtype=float)
    V = np.asarray(V, dtype=float)
    out = np.full_like(V, np.nan)
    if V.shape[0] >= 3:
        out[1:-1] = (V[2:] - V[:-2]) / (t[2:] - t[:-2])
    return out


@dataclass(frozen=True, eq=False)
class TraceRecord:
    """
    One step of a run. ξ-space fields are NaN when q lies outside the joint
    box (classical law past a limit); V is NaN for laws without a storage
    function.
    """
    t: float
    q: np.ndarray
    q_dot: np.ndarray
    q_d: np.ndarray
    xi: np.ndarray
    xi_err: np.ndarray
    xi_err_dot: np.ndarray
    tau_raw: np.ndarray
    tau: np.ndarray
    force: np.ndarray
    V: float
    V_dot_analytic: float
    margin: np.ndarray
    saturated: bool = False
    diverged: bool = False

    def as_row(self) -> List[float]:
        row: List[float] = [float(self.t)]
        for name in _VECTOR_FIELDS:
            row += np.asarray(getattr(self, name), dtype=float).tolist()
        row += np.asarray(self.force, dtype=float).tolist()
        row += [float(self.V), float(self.V_dot_analytic), np.nan]
        row += np.asarray(self.margin, dtype=float).tolist()
        row += [bool(self.saturated), bool(self.diverged)]
        return row


@dataclass
class SimTrace:
    """
    Time-ordered records of one run plus the metadata needed to interpret them.

    Attributes:
        n_joints: Joint count
        metadata: JSON-serialisable run description (law, limits, gains, dt, ...)
        records: One entry per integration step, initial state first
        diverged: Run stopped early on a non-finite state
    """
    n_joints: int
    metadata: Dict[str, Any] = field(default_factory=dict)
    records: List[TraceRecord] = field(default_factory=list)
    diverged: bool = False

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: TraceRecord) -> None:
        if self.records and not record.t > self.records[-1].t:
            raise ValueError(f"trace time must increase (got {record.t} after {self.records[-1].t})")
        self.records.append(record)
        if record.diverged:
            self.diverged = True

    # --- column access -----------------------------------------------------

    def column(self, name: str) -> np.ndarray:
        """Stacked field over all records: shape (N,) for scalars, (N, n) for vectors."""
        if not self.records:
            return np.empty((0,) if name in ("t", "V", "V_dot_analytic") else (0, self.n_joints))
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def t(self) -> np.ndarray:
        return self.column("t")

    @property
    def V(self) -> np.ndarray:
        return self.column("V")

    @property
    def V_dot_numeric(self) -> np.ndarray:
        return numeric_v_dot(self.t, self.V)

    # --- tabular form ------------------------------------------------------

    def to_frame(self) -> pd.DataFrame:
        columns = trace_columns(self.n_joints)
        frame = pd.DataFrame([r.as_row() for r in self.records], columns=columns)
        frame["V_dot_numeric"] = numeric_v_dot(frame["t"].to_numpy(), frame["V"].to_numpy())
        frame["saturated"] = frame["saturated"].astype(bool)
        frame["diverged"] = frame["diverged"].astype(bool)
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, metadata: Optional[Dict[str, Any]] = None) -> "SimTrace":
        n = sum(1 for c in frame.columns if c.startswith("q_dot_"))
        if n == 0 or list(frame.columns) != trace_columns(n):
            raise ValueError("frame does not have the trace column layout")

        def block(name: str) -> np.ndarray:
            return frame[[f"{name}_{i + 1}" for i in range(n)]].to_numpy(dtype=float)

        vectors = {name: block(name) for name in _VECTOR_FIELDS}
        margins = block("margin")
        forces = frame[["f_x", "f_y"]].to_numpy(dtype=float)
        t = frame["t"].to_numpy(dtype=float)
        V = frame["V"].to_numpy(dtype=float)
        V_dot = frame["V_dot_analytic"].to_numpy(dtype=float)
        saturated = frame["saturated"].astype(bool).to_numpy()
        diverged = frame["diverged"].astype(bool).to_numpy()

        trace = cls(n_joints=n, metadata=dict(metadata or {}))
        for k in range(len(frame)):
            trace.append(TraceRecord(
                t=float(t[k]),
                force=forces[k],
                V=float(V[k]),
                V_dot_analytic=float(V_dot[k]),
                margin=margins[k],
                saturated=bool(saturated[k]),
                diverged=bool(diverged[k]),
                **{name: values[k] for name, values in vectors.items()},
            ))
        return trace


# ============================================================================
# CSV I/O
# ============================================================================

def write_trace_csv(trace: SimTrace, path: Union[str, Path]) -> Path:
    """Write the trace with its metadata header; parent directories are created."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {"format": TRACE_FORMAT, "units": UNITS, "diverged": trace.diverged, **trace.metadata}
    with path.open("w", encoding="utf-8", newline="") as fh:
        for key, value in header.items():
            fh.write(f"# {key}: {json.dumps(value, ensure_ascii=False)}\n")
        trace.to_frame().to_csv(fh, index=False, float_format="%.17g")
    logger.info("wrote trace (%d records) to %s", len(trace), path)
    return path


def read_trace_metadata(path: Union[str, Path]) -> Dict[str, Any]:
    metadata: Dict[str, Any] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition(": ")
            try:
                metadata[key] = json.loads(value)
            except json.JSONDecodeError:
                metadata[key] = value
    return metadata


def read_trace_csv(path: Union[str, Path]) -> Tuple[pd.DataFrame, Dict[str, Any]]:
    """
    Load a trace file.

    Returns:
        (frame, metadata) where frame has the `trace_columns` layout

    Raises:
        ValueError: The file is not a trace written by `write_trace_csv`
    """
    metadata = read_trace_metadata(path)
    if metadata.get("format") != TRACE_FORMAT:
        raise ValueError(f"{path} is not a trace file (missing '# format: {TRACE_FORMAT}' header)")
    frame = pd.read_csv(path, comment="#")
    return frame, metadata


def load_trace(path: Union[str, Path]) -> SimTrace:
    frame, metadata = read_trace_csv(path)
    metadata.pop("format", None)
    metadata.pop("units", None)
    diverged = bool(metadata.pop("diverged", False))
    trace = SimTrace.from_frame(frame, metadata)
    trace.diverged = trace.diverged or diverged
    return trace
