"""Feedback laws: geodesic CCM controller and the LQR baseline.

The CCM law integrates the differential controller along the minimal
geodesic from the reference state to the current state,

    u(t) = u*(t) - 1/2 sum_k w_k rho(gamma(s_k)) B^T M(gamma(s_k)) gamma_s(s_k),

evaluated with the same Clenshaw-Curtis grid that certified the geodesic
solve. The Riemannian energy of that geodesic is a control Lyapunov
function, so the per-step energies double as a stability diagnostic. The
LQR baseline solves the continuous algebraic Riccati equation at the origin.
"""
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_continuous_are

from .basis import basis_table, chebyshev_grid
from .geodesic import (GeodesicProblem, SolverConfig, energy_hessian,
                       solve_adaptive, solve_geodesic)
from .metric import validate_lmi

__all__ = [
    "ZeroReference",
    "LqrController",
    "CcmController",
    "CcmControlSession",
    "ControlStep",
    "GeodesicConvergenceError",
    "lqr_design",
    "lqr_control",
    "ccm_control",
    "riemannian_energy_to_target",
    "feedback_from_geodesic",
]


class GeodesicConvergenceError(RuntimeError):
    """The geodesic solve behind a control evaluation did not converge."""


@dataclass(frozen=True)
class ZeroReference:
    """Constant-zero nominal pair (x*, u*): regulation to the origin."""
    n: int
    m: int = 1

    def state(self, t):
        return np.zeros(self.n)

    def control(self, t):
        return np.zeros(self.m)


# ---------------------------------------------------------------------------
# LQR baseline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LqrController:
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray                # CARE solution
    K: np.ndarray                # gain R^{-1} B^T P
    reference: object = None     # defaults to regulation to the origin


def lqr_design(A, B, Q, R, reference=None):
    """Solve the CARE and package the gain; checks residual, definiteness,
    and that the closed loop is Hurwitz."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n, m = B.shape
    try:
        P = solve_continuous_are(A, B, Q, R)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("LQR design failed (pair not stabilizable?): %s"
                           % exc)
    P = 0.5 * (P + P.T)
    residual = A.T @ P + P @ A - P @ B @ np.linalg.solve(R, B.T @ P) + Q
    res_norm = float(np.linalg.norm(residual))
    if res_norm >= 1e-8:
        raise RuntimeError("CARE residual %.3e exceeds 1e-8" % res_norm)
    if np.min(np.linalg.eigvalsh(P)) <= 0.0:
        raise RuntimeError("CARE solution is not positive definite")
    K = np.linalg.solve(R, B.T @ P)
    if np.max(np.linalg.eigvals(A - B @ K).real) >= 0.0:
        raise RuntimeError("closed-loop matrix A - BK is not Hurwitz")
    if reference is None:
        reference = ZeroReference(n, m)
    return LqrController(A=A, B=B, Q=Q, R=R, P=P, K=K, reference=reference)


def lqr_control(controller, x, t):
    """u = -K (x - x*(t)) + u*(t)."""
    x = np.asarray(x, dtype=float)
    ref = controller.reference
    return ref.control(t) - controller.K @ (x - ref.state(t))


# ---------------------------------------------------------------------------
# CCM controller
# ---------------------------------------------------------------------------

class CcmController:
    """Immutable bundle (metric, system, solver config, reference).

    The system supplies B(x, t) for the feedback quadrature and f/A for the
    construction-time contraction check; pass validate=False to skip that
    check (the instance then carries validation_overridden=True).
    """

    def __init__(self, metric, system, config=None, reference=None,
                 validate=True, validation_grid=None):
        self.metric = metric
        self.system = system
        self.config = config if config is not None else SolverConfig()
        m = np.asarray(system.B(np.zeros(metric.n), 0.0), dtype=float)
        self.m = 1 if m.ndim == 1 else m.shape[1]
        self.reference = (reference if reference is not None
                          else ZeroReference(metric.n, self.m))
        self.lmi_report = None
        self.validation_overridden = not validate
        if validate:
            if validation_grid is None:
                axes = [np.linspace(-10.0, 10.0, 5)] * metric.n
                validation_grid = np.stack(
                    [g.ravel() for g in np.meshgrid(*axes)], axis=1)
            report = validate_lmi(metric, system, validation_grid)
            if not report.passed:
                raise ValueError(
                    "metric failed the contraction LMI check (worst "
                    "eigenvalue %.3e at %s); pass validate=False to override"
                    % (report.worst_eigenvalue,
                       np.array2string(report.worst_point, precision=3)))
            self.lmi_report = report
        else:
            warnings.warn("CCM controller constructed without contraction "
                          "validation", stacklevel=2)

    def _input_columns(self, G, t):
        """B(gamma(s_k), t) stacked over curve samples -> (K, n, m)."""
        rows = []
        for xk in G:
            Bk = np.asarray(self.system.B(xk, t), dtype=float)
            if Bk.ndim == 1:
                Bk = Bk[:, None]
            rows.append(Bk)
        return np.stack(rows)


def feedback_from_geodesic(controller, solution, t=0.0):
    """The quadrature term -1/2 sum_k w_k rho_k B_k^T M_k gamma_s(s_k),
    evaluated on the solve's own CCQ grid."""
    met = controller.metric
    grid = chebyshev_grid(solution.N)
    table = basis_table(solution.D, grid)
    C = solution.coefficients
    G = table.values @ C.T
    Gs = table.derivs @ C.T
    xv = G[:, met.var_index]
    Mn = met.M_values(xv, check=False)
    rho = met.rho_values(xv)
    MGs = np.einsum('kij,kj->ki', Mn, Gs)
    Bstack = controller._input_columns(G, t)
    integrand = np.einsum('kim,ki->km', Bstack, MGs)   # B^T M gamma_s
    return -0.5 * ((grid.weights * rho) @ integrand)


def ccm_control(controller, x, t=0.0):
    """One-shot CCM law: adaptively solve the geodesic x*(t) -> x, then
    quadrate the differential controller along it. Raises
    GeodesicConvergenceError when the solve is rejected."""
    x = np.asarray(x, dtype=float)
    ref = controller.reference
    sol = solve_adaptive(controller.metric, ref.state(t), x,
                         controller.config)
    if not sol.converged:
        raise GeodesicConvergenceError(
            "adaptive geodesic solve rejected (best uniformity error %.3e)"
            % sol.uniformity_error)
    return np.asarray(ref.control(t), dtype=float) \
        + feedback_from_geodesic(controller, sol, t)


def riemannian_energy_to_target(controller, x, t=0.0):
    """E* of the geodesic x*(t) -> x: the control Lyapunov function value."""
    x = np.asarray(x, dtype=float)
    sol = solve_adaptive(controller.metric, controller.reference.state(t), x,
                         controller.config)
    if not sol.converged:
        raise GeodesicConvergenceError(
            "adaptive geodesic solve rejected (best uniformity error %.3e)"
            % sol.uniformity_error)
    return sol.energy


# ---------------------------------------------------------------------------
# receding-horizon session (warm-started per-step solves)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ControlStep:
    u: np.ndarray
    energy: float
    solve_time: float
    iterations: int
    D: int
    stale: bool                  # True when u is the last good control


class CcmControlSession:
    """Mutable per-loop driver around an immutable CcmController.

    Re-solves the geodesic at every control step, warm-started from the
    previous accepted curve: the boundary shift gamma(1) <- x (and
    gamma(0) <- x*(t)) is absorbed into the two lowest Chebyshev
    coefficients and the quasi-Newton matrix is seeded with the exact
    energy Hessian at the shifted curve. If the warm solve is rejected the
    session falls back to a full adaptive solve, which re-selects the
    degree from scratch in both directions -- carrying a high degree into
    a region where a low one suffices leaves stale high-order coefficients
    that the energy termination cannot distinguish from the optimum once
    the energy is small. On solver failure the session returns the last
    good control flagged stale instead of breaking the loop; with no last
    good control the failure propagates.
    """

    def __init__(self, controller):
        self.controller = controller
        self.C = None            # accepted coefficients, (n, D+1)
        self.D = None
        self._last_u = None

    def _accept(self, sol):
        return sol.converged and \
            sol.uniformity_error < self.controller.config.uniformity_tol

    def _warm_solve(self, x_start, x_end, D, C_warm):
        cfg = self.controller.config
        problem = GeodesicProblem(self.controller.metric, x_start, x_end,
                                  D=D, N=D + cfg.a)
        H0 = energy_hessian(C_warm, problem)
        return solve_geodesic(problem, cfg, c_init=C_warm, H0=H0)

    def step(self, x, t=0.0):
        ctl = self.controller
        ref = ctl.reference
        x = np.asarray(x, dtype=float)
        x_star = np.asarray(ref.state(t), dtype=float)
        t0 = time.perf_counter()
        try:
            if self.C is None:
                sol = solve_adaptive(ctl.metric, x_star, x, ctl.config)
            else:
                # shift the carried curve onto the new boundary pair: adding
                # d0 (1 - s) + d1 s moves only the T*_0 and T*_1 coefficients
                g0 = self.C @ ((-1.0) ** np.arange(self.C.shape[1]))
                g1 = np.sum(self.C, axis=1)
                d0 = x_star - g0
                d1 = x - g1
                C = self.C.copy()
                C[:, 0] += 0.5 * (d0 + d1)
                C[:, 1] += 0.5 * (d1 - d0)
                sol = self._warm_solve(x_star, x, self.D, C)
                if not self._accept(sol):
                    sol = solve_adaptive(ctl.metric, x_star, x, ctl.config)
        except Exception:
            if self._last_u is None:
                raise
            return ControlStep(u=self._last_u, energy=np.nan,
                               solve_time=time.perf_counter() - t0,
                               iterations=0, D=self.D or 0, stale=True)
        accepted = self._accept(sol)
        self.C = sol.coefficients
        self.D = sol.D
        if not accepted and self._last_u is None:
            raise GeodesicConvergenceError(
                "geodesic solve rejected on the first control step "
                "(uniformity error %.3e)" % sol.uniformity_error)
        if accepted:
            u = np.asarray(ref.control(t), dtype=float) \
                + feedback_from_geodesic(ctl, sol, t)
            self._last_u = u
            stale = False
        else:
            u = self._last_u
            stale = True
        return ControlStep(u=u, energy=sol.energy,
                           solve_time=time.perf_counter() - t0,
                           iterations=sol.iterations, D=sol.D, stale=stale)
