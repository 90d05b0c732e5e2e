"""Sampled-data closed-loop simulation with the stiff case-study plant.

The loop is zero-order hold: the controller is evaluated once per control
period dt_ctrl, and the plant xdot = f(x,t) + B(x,t) u is integrated across
the period with fixed-step RK4 substeps of length dt_int. The case-study
system blows up in finite time without adequate feedback, so runs terminate
early once the state norm passes a hard divergence cap.
"""
import time
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SystemModel",
    "Trajectory",
    "case_study_system",
    "simulate",
    "stability_verdict",
]

DIVERGENCE_CAP = 1e6


@dataclass(frozen=True)
class SystemModel:
    n: int
    m: int
    f: object                    # drift, f(x, t) -> (n,)
    B: object                    # input matrix, B(x, t) -> (n, m)
    A: object = None             # Jacobian df/dx, (x, t) -> (n, n)

    def __post_init__(self):
        if self.A is None:
            # central finite-difference fallback
            f = self.f
            n = self.n

            def jac(x, t, h=1e-6):
                x = np.asarray(x, dtype=float)
                J = np.zeros((n, n))
                for i in range(n):
                    dx = np.zeros(n)
                    dx[i] = h
                    J[:, i] = (np.asarray(f(x + dx, t))
                               - np.asarray(f(x - dx, t))) / (2.0 * h)
                return J

            object.__setattr__(self, "A", jac)


def case_study_system():
    """The stiff benchmark plant:

    f(x) = (-x1 + x3, x1^2 - x2 - 2 x1 x3 + x3, -x2),  B = (0, 0, 1)^T.
    """
    B_col = np.array([[0.0], [0.0], [1.0]])

    def f(x, t=0.0):
        x1, x2, x3 = x
        return np.array([-x1 + x3,
                         x1 * x1 - x2 - 2.0 * x1 * x3 + x3,
                         -x2])

    def B(x, t=0.0):
        return B_col

    def A(x, t=0.0):
        x1, _, x3 = x
        return np.array([[-1.0, 0.0, 1.0],
                         [2.0 * x1 - 2.0 * x3, -1.0, 1.0 - 2.0 * x1],
                         [0.0, -1.0, 0.0]])

    return SystemModel(n=3, m=1, f=f, B=B, A=A)


@dataclass(frozen=True)
class Trajectory:
    x0: np.ndarray
    times: np.ndarray            # (K,) post-step instants, strictly increasing
    states: np.ndarray           # (K, n) states at those instants
    controls: np.ndarray         # (K, m) control held over the step
    energies: np.ndarray         # (K,) geodesic energy (nan for non-CCM)
    solve_times: np.ndarray      # (K,) wall-clock controller latency
    status: str                  # converged | diverged | horizon-reached
    horizon: float
    dt_ctrl: float

    def __post_init__(self):
        K = len(self.times)
        if not (len(self.states) == len(self.controls) == len(self.energies)
                == len(self.solve_times) == K):
            raise ValueError("trajectory arrays have inconsistent lengths")
        if K > 1 and not np.all(np.diff(self.times) > 0.0):
            raise ValueError("trajectory times must be strictly increasing")

    def to_csv(self, path):
        """CSV export: t,x1,...,xn,u1,...,um,energy,solve_time — one row per
        control step, full 64-bit decimal text."""
        n = self.states.shape[1]
        m = self.controls.shape[1]
        header = ",".join(["t"] + ["x%d" % (i + 1) for i in range(n)]
                          + ["u%d" % (j + 1) for j in range(m)]
                          + ["energy", "solve_time"])
        with open(path, "w") as fh:
            fh.write(header + "\n")
            for k in range(len(self.times)):
                row = np.concatenate(
                    [[self.times[k]], self.states[k], self.controls[k],
                     [self.energies[k], self.solve_times[k]]])
                fh.write(",".join("%.17g" % v for v in row) + "\n")


def _step_function(controller):
    """Normalize the controller argument to (x, t) -> (u, energy).

    Accepts a receding-horizon session (has .step), an LQR controller (has
    .K), or a plain callable u(x, t).
    """
    if hasattr(controller, "step"):
        def step(x, t):
            rec = controller.step(x, t)
            return np.atleast_1d(np.asarray(rec.u, dtype=float)), rec.energy
        return step
    if hasattr(controller, "K"):
        from .controller import lqr_control

        def step(x, t):
            return np.atleast_1d(lqr_control(controller, x, t)), np.nan
        return step
    if callable(controller):
        def step(x, t):
            return np.atleast_1d(np.asarray(controller(x, t),
                                            dtype=float)), np.nan
        return step
    raise TypeError("controller must be a session, an LQR controller, or a "
                    "callable (x, t) -> u")


def _rk4_hold(system, x, u, t, dt_ctrl, dt_int):
    """Integrate one control period with u held constant (ZOH)."""
    nsub = max(1, int(round(dt_ctrl / dt_int)))
    h = dt_ctrl / nsub

    def xdot(xx, tt):
        return (np.asarray(system.f(xx, tt), dtype=float)
                + (np.asarray(system.B(xx, tt), dtype=float)
                   @ u).reshape(-1))

    for i in range(nsub):
        ti = t + i * h
        k1 = xdot(x, ti)
        k2 = xdot(x + 0.5 * h * k1, ti + 0.5 * h)
        k3 = xdot(x + 0.5 * h * k2, ti + 0.5 * h)
        k4 = xdot(x + h * k3, ti + h)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def simulate(system, controller, x0, horizon=15.0, dt_ctrl=1e-3,
             dt_int=1e-4):
    """Run the sampled-data loop; rows are recorded at post-step instants.

    Early termination: status='diverged' once the sup-norm passes 1e6 (the
    open-loop plant exhibits finite-time blowup), status='controller-failed'
    if the control evaluation raises mid-run. A completed run reports
    'converged' when the default stability verdict accepts it, else
    'horizon-reached'.
    """
    if dt_int > dt_ctrl:
        raise ValueError("need dt_int <= dt_ctrl")
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    step = _step_function(controller)
    x = np.asarray(x0, dtype=float).copy()
    K = int(round(horizon / dt_ctrl))
    times = np.empty(K)
    states = np.empty((K, system.n))
    energies = np.empty(K)
    solve_times = np.empty(K)
    controls = None
    status = "horizon-reached"
    k_done = 0
    for k in range(K):
        t = k * dt_ctrl
        t0 = time.perf_counter()
        try:
            u, E = step(x, t)
        except Exception:
            status = "controller-failed"
            break
        latency = time.perf_counter() - t0
        if controls is None:
            controls = np.empty((K, len(u)))
        x = _rk4_hold(system, x, u, t, dt_ctrl, dt_int)
        times[k] = t + dt_ctrl
        states[k] = x
        controls[k] = u
        energies[k] = E
        solve_times[k] = latency
        k_done = k + 1
        if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_CAP:
            status = "diverged"
            break
    if controls is None:
        controls = np.empty((0, system.m))
    traj = Trajectory(
        x0=np.asarray(x0, dtype=float), times=times[:k_done],
        states=states[:k_done], controls=controls[:k_done],
        energies=energies[:k_done], solve_times=solve_times[:k_done],
        status=status, horizon=horizon, dt_ctrl=dt_ctrl)
    if status == "horizon-reached" and stability_verdict(traj) == "stabilized":
        traj = Trajectory(
            x0=traj.x0, times=traj.times, states=traj.states,
            controls=traj.controls, energies=traj.energies,
            solve_times=traj.solve_times, status="converged",
            horizon=horizon, dt_ctrl=dt_ctrl)
    return traj


def stability_verdict(trajectory, ball_radius=0.05, settle_fraction=0.25):
    """'stabilized' iff the state stays inside the sup-norm ball over the
    final settle_fraction of the horizon (and the run neither diverged nor
    ended early)."""
    if len(trajectory.times) == 0:
        raise ValueError("empty trajectory")
    if trajectory.status == "diverged":
        return "not_stabilized"
    # the run must actually cover the horizon for the tail criterion to apply
    if trajectory.times[-1] < trajectory.horizon - 0.5 * trajectory.dt_ctrl:
        return "not_stabilized"
    t_tail = (1.0 - settle_fraction) * trajectory.horizon
    tail = trajectory.states[trajectory.times >= t_tail]
    if len(tail) == 0:
        return "not_stabilized"
    return ("stabilized" if float(np.max(np.abs(tail))) < ball_radius
            else "not_stabilized")
