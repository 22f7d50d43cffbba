import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from joint_limit_control.trace import (
    SimTrace,
    TraceRecord,
    load_trace,
    numeric_v_dot,
    read_trace_csv,
    trace_columns,
    write_trace_csv,
)


def _record(t, V=1.0, **overrides):
    fields = dict(
        t=t,
        q=np.array([0.1, -0.2]),
        q_dot=np.zeros(2),
        q_d=np.array([0.0, -0.5]),
        xi=np.array([0.05, 0.3]),
        xi_err=np.array([0.05, 0.1]),
        xi_err_dot=np.zeros(2),
        tau_raw=np.array([3.0, 1.0]),
        tau=np.array([3.0, 1.0]),
        force=np.zeros(2),
        V=V,
        V_dot_analytic=0.0,
        margin=np.array([0.2, 0.2]),
    )
    fields.update(overrides)
    return TraceRecord(**fields)


def test_column_layout():
    assert trace_columns(2) == [
        "t",
        "q_1", "q_2", "q_dot_1", "q_dot_2", "q_d_1", "q_d_2",
        "xi_1", "xi_2", "xi_err_1", "xi_err_2", "xi_err_dot_1", "xi_err_dot_2",
        "tau_raw_1", "tau_raw_2", "tau_1", "tau_2",
        "f_x", "f_y", "V", "V_dot_analytic", "V_dot_numeric",
        "margin_1", "margin_2", "saturated", "diverged",
    ]


def test_numeric_v_dot_central_difference():
    t = np.linspace(0.0, 1.0, 11)
    V = 3.0 * t ** 2
    out = numeric_v_dot(t, V)
    assert math.isnan(out[0]) and math.isnan(out[-1])
    assert_allclose(out[1:-1], 6.0 * t[1:-1], atol=1e-12)


def test_numeric_v_dot_short_series():
    assert np.all(np.isnan(numeric_v_dot([0.0, 1.0], [1.0, 2.0])))


def test_append_requires_increasing_time():
    trace = SimTrace(n_joints=2)
    trace.append(_record(0.0))
    with pytest.raises(ValueError):
        trace.append(_record(0.0))


def test_diverged_record_marks_trace():
    trace = SimTrace(n_joints=2)
    trace.append(_record(0.0))
    assert not trace.diverged
    trace.append(_record(0.1, diverged=True, V=math.nan))
    assert trace.diverged


def test_csv_file_keeps_metadata_and_values(tmp_path):
    trace = SimTrace(n_joints=2, metadata={"name": "unit", "law": "proposed", "dt": 0.1})
    for k, V in enumerate([3.0, 2.0, 1.5, 1.0]):
        trace.append(_record(0.1 * k, V=V, saturated=(k == 2)))
    trace.append(_record(0.4, V=math.nan, xi=np.full(2, np.nan)))

    path = write_trace_csv(trace, tmp_path / "nested" / "unit.csv")
    assert path.read_text().startswith("# format: ")

    frame, metadata = read_trace_csv(path)
    assert list(frame.columns) == trace_columns(2)
    assert metadata["law"] == "proposed"
    assert metadata["units"]["angle"] == "rad"
    assert frame["saturated"].tolist() == [False, False, True, False, False]
    assert_allclose(frame["V_dot_numeric"].to_numpy()[1:3], [-7.5, -5.0])

    loaded = load_trace(path)
    assert loaded.metadata == {"name": "unit", "law": "proposed", "dt": 0.1}
    assert not loaded.diverged
    assert_allclose(loaded.t, trace.t)
    assert_allclose(loaded.column("q"), trace.column("q"))
    assert np.isnan(loaded.records[-1].xi).all()


def test_read_rejects_foreign_csv(tmp_path):
    path = tmp_path / "plain.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_trace_csv(path)
