from joint_limit_control.dynamics import coriolis_matrix
from joint_limit_control.selftest import DEFAULT_SAMPLES, run_selftest


def test_selftest_passes_on_desk_arm():
    result = run_selftest(samples=50, seed=3)
    assert result.passed, result.to_table()
    assert "PASS" in result.to_table()


def test_selftest_runs_on_three_links(three_link):
    from joint_limit_control.parametrization import JointLimits

    limits = JointLimits.from_degrees([-90.0, -120.0, -60.0], [90.0, 10.0, 60.0])
    result = run_selftest(model=three_link, limits=limits, samples=30)
    assert result.passed, result.to_table()


def test_mass_matrix_rate_is_cross_checked():
    result = run_selftest(samples=50, seed=5)
    names = [c.name for c in result.checks]
    assert "skew(M_dot_fd - 2C)" in names
    assert "M_dot analytic == finite difference" in names
    assert result.passed, result.to_table()


def test_default_sample_count():
    assert DEFAULT_SAMPLES == 1000


def test_broken_coriolis_is_caught():
    def negated(model, q, q_dot):
        return -coriolis_matrix(model, q, q_dot)

    result = run_selftest(coriolis=negated, samples=50)
    assert not result.passed
    assert "skew(M_dot - 2C)" in result.failed
    assert "skew(M_dot_fd - 2C)" in result.failed
    assert "skew(M_xi_dot - 2C_xi)" in result.failed
    # M itself is untouched, so its two rates still agree
    assert "M_dot analytic == finite difference" not in result.failed
