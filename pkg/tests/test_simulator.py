"""Closed-loop simulator: system model, RK4 hold, statuses, verdicts, CSV."""

import numpy as np
import pytest

from ccmgeo import (SystemModel, case_study_system, lqr_design, simulate,
                    stability_verdict)
from ccmgeo.simulator import _rk4_hold


def test_case_study_vector_field_samples():
    sys_ = case_study_system()
    np.testing.assert_allclose(sys_.f(np.zeros(3), 0.0), np.zeros(3),
                               atol=1e-15)
    # f(1,1,1) = (-1+1, 1-1-2+1, -1) = (0, -1, -1)
    np.testing.assert_allclose(sys_.f(np.ones(3), 0.0), [0.0, -1.0, -1.0],
                               atol=1e-15)
    np.testing.assert_allclose(sys_.B(np.ones(3), 0.0), [[0.], [0.], [1.]],
                               atol=1e-15)


def test_case_study_jacobian_at_origin():
    sys_ = case_study_system()
    A0 = sys_.A(np.zeros(3), 0.0)
    expected = np.array([[-1.0, 0.0, 1.0],
                         [0.0, -1.0, 1.0],
                         [0.0, -1.0, 0.0]])
    np.testing.assert_allclose(A0, expected, atol=1e-14)


def test_jacobian_matches_finite_difference_off_origin():
    sys_ = case_study_system()
    x = np.array([1.3, -0.2, 0.8])
    A = sys_.A(x, 0.0)
    h = 1e-6
    for j in range(3):
        e = np.zeros(3); e[j] = h
        col = (sys_.f(x + e, 0.0) - sys_.f(x - e, 0.0)) / (2 * h)
        np.testing.assert_allclose(A[:, j], col, atol=1e-8)


def test_default_jacobian_is_finite_difference():
    sys_ = SystemModel(n=2, m=1,
                       f=lambda x, t: np.array([x[1], -np.sin(x[0])]),
                       B=lambda x, t: np.array([[0.0], [1.0]]))
    x = np.array([0.4, -0.2])
    A = sys_.A(x, 0.0)
    ref = np.array([[0.0, 1.0], [-np.cos(0.4), 0.0]])
    np.testing.assert_allclose(A, ref, atol=1e-7)


# ---------------------------------------------------------------------------
# integrator
# ---------------------------------------------------------------------------

def test_scalar_decay_to_machine_accuracy():
    """x' = -x integrated over 1 s lands on exp(-1)."""
    sys_ = SystemModel(n=1, m=1,
                       f=lambda x, t: -x,
                       B=lambda x, t: np.array([[1.0]]))
    traj = simulate(sys_, lambda x, t: np.zeros(1), np.array([1.0]),
                    horizon=1.0, dt_ctrl=1e-3, dt_int=1e-3)
    assert traj.status in ("horizon-reached", "converged")
    assert abs(traj.states[-1, 0] - np.exp(-1.0)) < 1e-8


def test_rk4_fourth_order_slope():
    """Halving the substep cuts the one-interval error by ~2^4."""
    sys_ = SystemModel(n=1, m=1,
                       f=lambda x, t: x * x,
                       B=lambda x, t: np.array([[0.0]]))
    x0 = np.array([1.0])
    exact = 1.0 / (1.0 - 0.5)       # x' = x^2, x(0)=1, t=0.5
    errs = []
    for dt_int in (0.125, 0.0625, 0.03125, 0.015625):
        x = _rk4_hold(sys_, x0, np.zeros(1), 0.0, 0.5, dt_int)
        errs.append(abs(x[0] - exact))
    slopes = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(slopes - 4.0) < 0.3)


def test_zero_dynamics_hold_state():
    sys_ = SystemModel(n=3, m=1,
                       f=lambda x, t: np.zeros(3),
                       B=lambda x, t: np.zeros((3, 1)))
    x0 = np.array([0.3, -0.1, 0.2])
    traj = simulate(sys_, lambda x, t: np.zeros(1), x0, horizon=0.5)
    np.testing.assert_allclose(traj.states[-1], x0, atol=1e-14)
    assert stability_verdict(traj) == "not_stabilized"


def test_zero_state_is_stabilized():
    sys_ = SystemModel(n=2, m=1,
                       f=lambda x, t: np.zeros(2),
                       B=lambda x, t: np.zeros((2, 1)))
    traj = simulate(sys_, lambda x, t: np.zeros(1), np.zeros(2), horizon=0.5)
    assert stability_verdict(traj) == "stabilized"


# ---------------------------------------------------------------------------
# statuses and verdicts
# ---------------------------------------------------------------------------

def test_divergence_caps_run():
    sys_ = SystemModel(n=1, m=1,
                       f=lambda x, t: 3.0 * x,
                       B=lambda x, t: np.array([[0.0]]))
    traj = simulate(sys_, lambda x, t: np.zeros(1), np.array([1.0]),
                    horizon=15.0)
    assert traj.status == "diverged"
    assert traj.times[-1] < 15.0
    assert stability_verdict(traj) == "not_stabilized"


def test_controller_exception_recorded():
    sys_ = SystemModel(n=1, m=1,
                       f=lambda x, t: -x,
                       B=lambda x, t: np.array([[1.0]]))
    calls = []

    def flaky(x, t):
        calls.append(t)
        if len(calls) > 3:
            raise RuntimeError("sensor dropout")
        return np.zeros(1)

    traj = simulate(sys_, flaky, np.array([1.0]), horizon=1.0)
    assert traj.status == "controller-failed"
    assert len(traj.times) == 3


def test_lqr_closed_loop_statuses():
    sys_ = case_study_system()
    A0 = sys_.A(np.zeros(3), 0.0)
    B0 = sys_.B(np.zeros(3), 0.0)
    lqr = lqr_design(A0, B0, np.eye(3), np.eye(1))
    good = simulate(sys_, lqr, np.ones(3), horizon=6.0)
    assert stability_verdict(good) == "stabilized"
    bad = simulate(sys_, lqr, np.array([4.0, 4.0, 6.0]), horizon=6.0)
    assert bad.status == "diverged"


def test_truncated_run_cannot_be_stabilized():
    """A run that ends early never earns the settled verdict, even at 0."""
    sys_ = SystemModel(n=1, m=1,
                       f=lambda x, t: 10.0 * x,
                       B=lambda x, t: np.array([[0.0]]))
    traj = simulate(sys_, lambda x, t: np.zeros(1), np.array([1e-4]),
                    horizon=15.0)
    assert traj.status == "diverged"
    assert stability_verdict(traj) == "not_stabilized"


def test_verdict_ball_and_settle_fraction():
    sys_ = SystemModel(n=1, m=1,
                       f=lambda x, t: -x,
                       B=lambda x, t: np.array([[1.0]]))
    traj = simulate(sys_, lambda x, t: np.zeros(1), np.array([1.0]),
                    horizon=2.0)
    # e^{-1.5} ~ 0.223: still outside the default ball over the last quarter
    assert stability_verdict(traj) == "not_stabilized"
    assert stability_verdict(traj, ball_radius=0.5) == "stabilized"
    # loosening the window to the last instant only
    assert stability_verdict(traj, ball_radius=0.2,
                             settle_fraction=0.05) == "stabilized"


# ---------------------------------------------------------------------------
# trajectory record
# ---------------------------------------------------------------------------

def test_trajectory_shapes_and_time_grid():
    sys_ = SystemModel(n=2, m=1,
                       f=lambda x, t: np.array([x[1], -x[0]]),
                       B=lambda x, t: np.array([[0.0], [1.0]]))
    traj = simulate(sys_, lambda x, t: np.zeros(1), np.array([1.0, 0.0]),
                    horizon=0.25, dt_ctrl=1e-2, dt_int=1e-3)
    assert traj.states.shape == (25, 2)
    assert traj.controls.shape == (25, 1)
    np.testing.assert_allclose(traj.times,
                               np.arange(1, 26) * 1e-2, atol=1e-12)
    np.testing.assert_array_equal(traj.x0, [1.0, 0.0])


def test_to_csv_format(tmp_path):
    sys_ = case_study_system()
    A0 = sys_.A(np.zeros(3), 0.0)
    B0 = sys_.B(np.zeros(3), 0.0)
    lqr = lqr_design(A0, B0, np.eye(3), np.eye(1))
    traj = simulate(sys_, lqr, np.ones(3), horizon=0.05)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "t,x1,x2,x3,u1,energy,solve_time"
    assert len(lines) == 1 + len(traj.times)
    row = lines[1].split(",")
    assert len(row) == 7
    assert abs(float(row[0]) - traj.times[0]) < 1e-15
    # full precision round trip
    assert float(row[1]) == traj.states[0, 0]


def test_ccm_and_lqr_agree_near_origin():
    """From a small initial state the CCM session tracks the LQR loop to
    within 1% of the initial offset for the whole horizon."""
    from ccmgeo import CcmControlSession, CcmController, case_study_metric
    import warnings
    sys_ = case_study_system()
    met = case_study_metric()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ctl = CcmController(met, sys_, validate=False)
    x0 = np.full(3, 0.01)
    t_ccm = simulate(sys_, CcmControlSession(ctl), x0, horizon=2.0)
    A0 = sys_.A(np.zeros(3), 0.0)
    B0 = sys_.B(np.zeros(3), 0.0)
    lqr = lqr_design(A0, B0, np.eye(3), np.eye(1))
    t_lqr = simulate(sys_, lqr, x0, horizon=2.0)
    gap = np.abs(t_ccm.states - t_lqr.states).max()
    assert gap < 1e-2 * np.linalg.norm(x0)
