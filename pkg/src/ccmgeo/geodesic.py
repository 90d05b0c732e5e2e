"""Pseudospectral geodesic solver.

The curve between two states is parametrized per component by shifted
Chebyshev polynomials, gamma_i(s) = sum_j c_ij T*_j(s), and the Riemannian
energy is discretized by Clenshaw-Curtis quadrature at the CGL nodes:

    E(c) = sum_k w_k gamma_s(s_k)^T M(gamma(s_k)) gamma_s(s_k),
    M = W^{-1},  gamma(0) = x_start,  gamma(1) = x_end.

The boundary conditions are linear in c (T*_j(0) = (-1)^j, T*_j(1) = 1), so
the NLP has only linear equality constraints and is solved by a feasible
equality-constrained BFGS iteration: each step solves the KKT system
[[H, A^T], [A, 0]] [p; nu] = [-g; 0] and backtracks with an Armijo rule.
Degree adaptation raises D (with N = D + a nodes) until the uniformity error

    unif = (1/E*) sqrt( sum_k (e(s_k) - E*)^2 w_k )     (validation grid, 2N)

drops below tolerance; a geodesic has constant integrand, so unif is a
solution certificate rather than a mere optimizer diagnostic.
"""
import time
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .basis import chebyshev_grid, basis_table
from .metric import SingularMetricError

__all__ = [
    "SolverConfig",
    "GeodesicProblem",
    "GeodesicSolution",
    "ShootingResult",
    "endpoint_constraints",
    "energy",
    "energy_gradient",
    "energy_hessian",
    "solve_geodesic",
    "uniformity_error",
    "solve_adaptive",
    "shooting_baseline",
]


@dataclass(frozen=True)
class SolverConfig:
    beta: float = 1e-10          # termination tolerance (grad norm / rel dE)
    alpha0: float = 1.0          # initial line-search step
    cbar: float = 0.1            # Armijo constant
    tau: float = 0.1             # backtracking factor
    max_iter: int = 500
    uniformity_tol: float = 1e-6
    D_min: int = 3
    D_max: int = 30
    a: int = 4                   # node surplus, N = D + a

    def __post_init__(self):
        if not 0.0 < self.cbar < 1.0:
            raise ValueError("Armijo constant cbar must lie in (0, 1)")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("backtracking factor tau must lie in (0, 1)")


@dataclass(frozen=True)
class GeodesicProblem:
    metric: object               # PolynomialMetric
    x_start: np.ndarray          # gamma(0)
    x_end: np.ndarray            # gamma(1)
    D: int                       # polynomial degree
    N: int = None                # node index; defaults to D + a
    a: int = 4                   # node surplus used when N is omitted

    def __post_init__(self):
        x0 = np.asarray(self.x_start, dtype=float)
        x1 = np.asarray(self.x_end, dtype=float)
        n = self.metric.n
        if x0.shape != (n,) or x1.shape != (n,):
            raise ValueError("endpoints must have shape (%d,)" % n)
        if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(x1))):
            raise ValueError("endpoints must be finite")
        if self.D < 1:
            raise ValueError("degree D must be at least 1")
        N = self.D + self.a if self.N is None else self.N
        if N <= self.D:
            raise ValueError("need N > D for the quadrature to resolve the "
                             "energy integrand")
        object.__setattr__(self, "x_start", x0)
        object.__setattr__(self, "x_end", x1)
        object.__setattr__(self, "N", int(N))
        object.__setattr__(self, "a", int(N) - self.D)


@dataclass(frozen=True)
class GeodesicSolution:
    c: np.ndarray                # flat coefficient vector, length n(D+1)
    energy: float                # E* >= 0
    uniformity_error: float
    iterations: int
    solve_time: float
    converged: bool
    D: int
    N: int
    n: int

    @property
    def coefficients(self):
        """Coefficients as an (n, D+1) array, one curve component per row."""
        return self.c.reshape(self.n, self.D + 1)


# ---------------------------------------------------------------------------
# constraints and initialization
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _constraint_system(n, D):
    """Endpoint constraint matrix and inv(A A^T), cached per (n, D)."""
    j = np.arange(D + 1)
    row0 = (-1.0) ** j           # T*_j(0)
    row1 = np.ones(D + 1)        # T*_j(1)
    A = np.zeros((2 * n, n * (D + 1)))
    for i in range(n):
        A[i, i * (D + 1):(i + 1) * (D + 1)] = row0
        A[n + i, i * (D + 1):(i + 1) * (D + 1)] = row1
    AAT_inv = np.linalg.inv(A @ A.T)
    A.setflags(write=False)
    AAT_inv.setflags(write=False)
    return A, AAT_inv


def endpoint_constraints(problem):
    """(A_c, b_c) with A_c c = b_c enforcing gamma(0)=x_start, gamma(1)=x_end."""
    A, _ = _constraint_system(problem.metric.n, problem.D)
    b = np.concatenate([problem.x_start, problem.x_end])
    return A, b


def _straight_line(x0, x1, D):
    n = len(x0)
    C = np.zeros((n, D + 1))
    C[:, 0] = 0.5 * (x0 + x1)
    if D >= 1:
        C[:, 1] = 0.5 * (x1 - x0)
    return C


def _as_coeff_matrix(c, n, D):
    c = np.asarray(c, dtype=float)
    if c.shape == (n, D + 1):
        return c
    if c.shape == (n * (D + 1),):
        return c.reshape(n, D + 1)
    raise ValueError("coefficients have shape %r, expected (%d, %d) or (%d,)"
                     % (c.shape, n, D + 1, n * (D + 1)))


# ---------------------------------------------------------------------------
# energy, gradient, Hessian
# ---------------------------------------------------------------------------

def _energy_raw(C, metric, V, Vd, w, want_grad=True):
    """E(c) and dE/dc on a fixed grid; +inf outside the PD region of W.

    The energy is only defined where W(gamma) is positive definite; the line
    search treats an excursion as a rejected step, so this returns inf rather
    than raising.
    """
    G = V @ C.T                  # (m, n) curve points
    Gs = Vd @ C.T                # (m, n) curve derivatives
    xv = G[:, metric.var_index]
    Wn = metric.W_values(xv)
    try:
        np.linalg.cholesky(Wn)
    except np.linalg.LinAlgError:
        return np.inf, (np.zeros_like(C) if want_grad else None)
    Mn = np.linalg.inv(Wn)
    MGs = np.einsum('kij,kj->ki', Mn, Gs)
    e = np.einsum('ki,ki->k', Gs, MGs)
    E = float(e @ w)
    if not want_grad:
        return E, None
    grad = 2.0 * (MGs * w[:, None]).T @ Vd
    # dM/dx = -M W' M enters only through the metric's polynomial variable
    Wp = metric.W_prime_values(xv)
    q = np.einsum('ki,kij,kj->k', MGs, Wp, MGs)
    grad[metric.var_index] -= (q * w) @ V
    return E, grad


def _grid_and_table(problem, grid, table):
    if grid is None:
        grid = chebyshev_grid(problem.N)
    if table is None:
        table = basis_table(problem.D, grid)
    return grid, table


def energy(c, problem, grid=None, table=None):
    """E(c) by Clenshaw-Curtis quadrature; raises SingularMetricError if the
    curve leaves the region where W is positive definite."""
    grid, table = _grid_and_table(problem, grid, table)
    C = _as_coeff_matrix(c, problem.metric.n, problem.D)
    E, _ = _energy_raw(C, problem.metric, table.values, table.derivs,
                       grid.weights, want_grad=False)
    if not np.isfinite(E):
        raise SingularMetricError(
            "curve leaves the positive-definite region of W")
    return E


def energy_gradient(c, problem, grid=None, table=None):
    """dE/dc, flat, length n(D+1):

    dE/dc_ij = sum_k w_k [ 2 (M gamma_s)_i dT*_j/ds(s_k)
                           - gamma_s^T M (dW/dx_i) M gamma_s T*_j(s_k) ].
    """
    grid, table = _grid_and_table(problem, grid, table)
    C = _as_coeff_matrix(c, problem.metric.n, problem.D)
    E, g = _energy_raw(C, problem.metric, table.values, table.derivs,
                       grid.weights, want_grad=True)
    if not np.isfinite(E):
        raise SingularMetricError(
            "curve leaves the positive-definite region of W")
    return g.ravel()


def _energy_grad_hess(C, metric, V, Vd, w):
    """E, grad, and the exact second derivative of E(c).

    With u = M gamma_s, a = M W' u and the per-node scalar
    ck = 2 u^T W' M W' u - u^T W'' u, the Hessian blocks are

      H[(i,j),(p,q)] = sum_k w_k [ 2 M_ip Vd_kj Vd_kq
                                   - 2 a_i Vd_kj V_kq [p = var]
                                   - 2 a_p V_kj Vd_kq [i = var]
                                   + ck V_kj V_kq     [i = p = var] ].

    Used to seed warm-started solves; returns (inf, None, None) outside the
    PD region.
    """
    n, Dp1 = C.shape
    nv = n * Dp1
    G = V @ C.T
    Gs = Vd @ C.T
    xv = G[:, metric.var_index]
    Wn = metric.W_values(xv)
    try:
        np.linalg.cholesky(Wn)
    except np.linalg.LinAlgError:
        return np.inf, None, None
    Mn = np.linalg.inv(Wn)
    Wx = metric.W_prime_values(xv)
    Wxx = metric.W_second_values(xv)
    U = np.einsum('kij,kj->ki', Mn, Gs)
    E = float(np.einsum('ki,ki->k', Gs, U) @ w)
    WxU = np.einsum('kij,kj->ki', Wx, U)
    Am = np.einsum('kij,kj->ki', Mn, WxU)
    q = np.einsum('ki,ki->k', U, WxU)
    grad = 2.0 * (U * w[:, None]).T @ Vd
    grad[metric.var_index] -= (q * w) @ V
    ck = (2.0 * np.einsum('ki,ki->k', WxU, np.einsum('kij,kj->ki', Mn, WxU))
          - np.einsum('ki,kij,kj->k', U, Wxx, U))
    H = np.zeros((nv, nv))
    va = metric.var_index
    for i in range(n):
        for p in range(n):
            blk = (Vd * (2.0 * w * Mn[:, i, p])[:, None]).T @ Vd
            H[i * Dp1:(i + 1) * Dp1, p * Dp1:(p + 1) * Dp1] += blk
    for i in range(n):
        blk = (Vd * (2.0 * w * Am[:, i])[:, None]).T @ V
        H[i * Dp1:(i + 1) * Dp1, va * Dp1:(va + 1) * Dp1] -= blk
        H[va * Dp1:(va + 1) * Dp1, i * Dp1:(i + 1) * Dp1] -= blk.T
    blk = (V * (w * ck)[:, None]).T @ V
    H[va * Dp1:(va + 1) * Dp1, va * Dp1:(va + 1) * Dp1] += blk
    return E, grad.ravel(), H


def energy_hessian(c, problem, grid=None, table=None):
    """Exact Hessian of E(c), (n(D+1), n(D+1)); see _energy_grad_hess."""
    grid, table = _grid_and_table(problem, grid, table)
    C = _as_coeff_matrix(c, problem.metric.n, problem.D)
    E, _, H = _energy_grad_hess(C, problem.metric, table.values, table.derivs,
                                grid.weights)
    if not np.isfinite(E):
        raise SingularMetricError(
            "curve leaves the positive-definite region of W")
    return H


# ---------------------------------------------------------------------------
# equality-constrained BFGS
# ---------------------------------------------------------------------------

def _minimize_ec_bfgs(fun, z0, A, AAT_inv, cfg, H0=None):
    """min f(z) s.t. A z = b from a feasible z0; fun(z) -> (E, grad).

    Steps solve the KKT system with the current BFGS matrix H and stay in the
    nullspace of A, so feasibility is preserved to roundoff. Terminates on
    projected-gradient norm <= beta, |dE| <= beta*max(1, |E|), or max_iter.
    """
    z = z0.copy()
    nv = len(z)
    mc = A.shape[0]

    def proj_grad(g):
        return g - A.T @ (AAT_inv @ (A @ g))

    H = np.eye(nv) if H0 is None else H0.copy()
    E, g = fun(z)
    if not np.isfinite(E):
        raise SingularMetricError(
            "initial curve leaves the positive-definite region of W")
    KKT = np.zeros((nv + mc, nv + mc))
    KKT[nv:, :nv] = A
    KKT[:nv, nv:] = A.T
    rhs = np.zeros(nv + mc)
    it = 0
    converged = False
    reset_used = False
    while it < cfg.max_iter:
        pg = proj_grad(g)
        if np.linalg.norm(pg) <= cfg.beta:
            converged = True
            break
        # decreases below the float64 resolution of E are unobservable; once
        # the predicted decrease |g^T p| falls under this floor, failing to
        # find a descent step means we are at the numerical optimum
        floor = 10.0 * np.finfo(float).eps * max(1.0, abs(E))
        KKT[:nv, :nv] = H
        rhs[:nv] = -g
        try:
            sol = np.linalg.solve(KKT, rhs)
            p = sol[:nv]
            gTp = float(g @ p)
        except np.linalg.LinAlgError:
            p = None
            gTp = 0.0
        if p is None or gTp >= 0.0:
            # not a descent direction (or KKT singular with an indefinite
            # seed): reset H once; a second failure means we are stalled at
            # constrained stationarity up to roundoff
            if reset_used:
                if p is None:
                    raise RuntimeError(
                        "KKT system is singular; the geodesic problem is "
                        "ill-posed (endpoint constraints rank-deficient?)")
                converged = abs(gTp) <= floor
                break
            H = np.eye(nv)
            reset_used = True
            continue
        reset_used = False
        alpha = cfg.alpha0
        E_new = None
        for _ in range(30):
            E_try, g_try = fun(z + alpha * p)
            if E_try <= E + cfg.cbar * alpha * gTp:
                E_new, g_new = E_try, g_try
                break
            alpha *= cfg.tau
        if E_new is None:
            # line search exhausted: converged if no meaningful decrease was
            # available in the first place, genuinely stuck otherwise
            converged = abs(gTp) <= floor
            break
        s = alpha * p
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            Hs = H @ s
            H = H - np.outer(Hs, Hs) / float(s @ Hs) + np.outer(y, y) / sy
        z = z + s
        dE = E - E_new
        E, g = E_new, g_new
        it += 1
        if abs(dE) <= cfg.beta * max(1.0, abs(E)):
            converged = True
            break
    return z, E, it, converged


# ---------------------------------------------------------------------------
# solve / adapt
# ---------------------------------------------------------------------------

def _uniformity(C, E, metric, D, N):
    """Relative RMS deviation of the energy integrand from E on a finer
    validation grid (N_val = 2N); 0 for the degenerate E = 0 case."""
    if E <= 0.0:
        return 0.0
    grid = chebyshev_grid(2 * N)
    table = basis_table(D, grid)
    G = table.values @ C.T
    Gs = table.derivs @ C.T
    Mn = metric.M_values(G[:, metric.var_index], check=False)
    e = np.einsum('ki,kij,kj->k', Gs, Mn, Gs)
    return float(np.sqrt(max(0.0, float(((e - E) ** 2) @ grid.weights))) / E)


def uniformity_error(solution, problem):
    """Recompute the uniformity certificate for a solution."""
    C = _as_coeff_matrix(solution.c, problem.metric.n, problem.D)
    return _uniformity(C, solution.energy, problem.metric, problem.D,
                       problem.N)


def solve_geodesic(problem, config=None, c_init=None, H0=None):
    """Solve the fixed-degree geodesic NLP from the straight-line curve.

    c_init (optional) must already satisfy the endpoint constraints; H0
    (optional) seeds the quasi-Newton matrix — both are used by warm starts
    (degree sweep, receding-horizon re-solves). Cold solves start from the
    straight line with H = I.
    """
    cfg = config if config is not None else SolverConfig()
    met = problem.metric
    n, D, N = met.n, problem.D, problem.N
    x0, x1 = problem.x_start, problem.x_end
    t0 = time.perf_counter()
    if np.array_equal(x0, x1):
        C = np.zeros((n, D + 1))
        C[:, 0] = x0
        return GeodesicSolution(
            c=C.ravel(), energy=0.0, uniformity_error=0.0, iterations=0,
            solve_time=time.perf_counter() - t0, converged=True,
            D=D, N=N, n=n)
    grid = chebyshev_grid(N)
    table = basis_table(D, grid)
    A, AAT_inv = _constraint_system(n, D)
    b = np.concatenate([x0, x1])
    if c_init is None:
        C0 = _straight_line(x0, x1, D)
    else:
        C0 = _as_coeff_matrix(c_init, n, D)
        if np.max(np.abs(A @ C0.ravel() - b)) > 1e-8:
            raise ValueError("c_init violates the endpoint constraints")
    V, Vd, w = table.values, table.derivs, grid.weights

    def fun(z):
        E, g = _energy_raw(z.reshape(n, D + 1), met, V, Vd, w)
        return E, (g.ravel() if g is not None else None)

    z, E, iters, conv = _minimize_ec_bfgs(fun, C0.ravel(), A, AAT_inv, cfg,
                                          H0=H0)
    C = z.reshape(n, D + 1)
    unif = _uniformity(C, E, met, D, N)
    return GeodesicSolution(
        c=C.ravel(), energy=E, uniformity_error=unif, iterations=iters,
        solve_time=time.perf_counter() - t0, converged=conv, D=D, N=N, n=n)


def solve_adaptive(metric, x_start, x_end, config=None):
    """Raise the degree (N = D + a) until the uniformity certificate accepts.

    Each stage after the first is warm-started by zero-padding the previous
    coefficients (Chebyshev coefficients nest) and seeding the quasi-Newton
    matrix with the exact energy Hessian at the padded curve; identity
    seeding cannot reliably pass the relative-decrease termination test when
    the remaining energy gap is already below it. Returns the first accepted
    solution, else the best ever seen with converged=False; solve_time covers
    the whole sweep.
    """
    cfg = config if config is not None else SolverConfig()
    t0 = time.perf_counter()
    C_prev = None
    best = None
    for D in range(cfg.D_min, cfg.D_max + 1):
        problem = GeodesicProblem(metric, x_start, x_end, D=D, N=D + cfg.a)
        if C_prev is None:
            sol = solve_geodesic(problem, cfg)
        else:
            ci = np.zeros((metric.n, D + 1))
            ci[:, :C_prev.shape[1]] = C_prev
            H0 = energy_hessian(ci, problem)
            sol = solve_geodesic(problem, cfg, c_init=ci, H0=H0)
        C_prev = sol.coefficients
        if best is None or sol.uniformity_error < best.uniformity_error:
            best = sol
        if sol.converged and sol.uniformity_error < cfg.uniformity_tol:
            return replace(sol, solve_time=time.perf_counter() - t0)
    return replace(best, solve_time=time.perf_counter() - t0, converged=False)


def solve_continuation(metric, x_start, x_end, D, config=None):
    """Warm-continue the degree ladder up to exactly degree D.

    Same stage progression as solve_adaptive but without the acceptance
    gate: the returned solution is the degree-D stage itself, whatever its
    uniformity error. Fixed-degree comparisons (the node-surplus sweep)
    need every stage polished to its floor, which continuation seeding
    provides and a cold solve at the target degree does not -- started far
    from the optimum, the relative-decrease test can fire while the curve
    shape is still unconverged.
    """
    cfg = config if config is not None else SolverConfig()
    if D < cfg.D_min:
        raise ValueError(
            "target degree %d is below D_min=%d" % (D, cfg.D_min))
    t0 = time.perf_counter()
    C_prev = None
    sol = None
    for Dk in range(cfg.D_min, D + 1):
        problem = GeodesicProblem(metric, x_start, x_end, D=Dk, N=Dk + cfg.a)
        if C_prev is None:
            sol = solve_geodesic(problem, cfg)
        else:
            ci = np.zeros((metric.n, Dk + 1))
            ci[:, :C_prev.shape[1]] = C_prev
            H0 = energy_hessian(ci, problem)
            sol = solve_geodesic(problem, cfg, c_init=ci, H0=H0)
        C_prev = sol.coefficients
    return replace(sol, solve_time=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# shooting baseline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShootingResult:
    """(path, energy, uniformity_error, time) with a convergence flag.

    Iterates like the 4-tuple it documents so callers can unpack it, while
    keeping `converged` available for diagnostics.
    """
    path: np.ndarray             # (segments+1, n) states
    energy: float
    uniformity_error: float
    time: float
    converged: bool

    def __iter__(self):
        return iter((self.path, self.energy, self.uniformity_error,
                     self.time))


def shooting_baseline(metric, x_start, x_end, segments, config=None):
    """Direct-transcription baseline for the geodesic problem.

    The path problem is recast with trivial dynamics xdot = u and objective
    integral of u^T M(x) u: piecewise-constant controls on uniform segments,
    piecewise-linear states, dynamics and endpoint equality constraints, all
    linear — solved with the same equality-constrained BFGS as the
    pseudospectral method. The transcribed objective evaluates M at segment
    midpoints; the returned energy and uniformity error are recomputed by
    per-segment Gauss quadrature along the final path so they are comparable
    across segment counts and with the pseudospectral solver.
    """
    if segments < 2:
        raise ValueError("need at least 2 segments")
    cfg = config if config is not None else SolverConfig()
    x0 = np.asarray(x_start, dtype=float)
    x1 = np.asarray(x_end, dtype=float)
    n = metric.n
    S = int(segments)
    h = 1.0 / S
    var = metric.var_index
    nx = n * (S + 1)
    nv = nx + n * S

    t0 = time.perf_counter()
    # constraints: x_{i+1} - x_i - h u_i = 0 (dynamics), x_0 and x_S pinned
    A = np.zeros((n * S + 2 * n, nv))
    for i in range(S):
        r = i * n
        A[r:r + n, (i + 1) * n:(i + 2) * n] = np.eye(n)
        A[r:r + n, i * n:(i + 1) * n] = -np.eye(n)
        A[r:r + n, nx + i * n:nx + (i + 1) * n] = -h * np.eye(n)
    A[n * S:n * S + n, 0:n] = np.eye(n)
    A[n * S + n:, nx - n:nx] = np.eye(n)
    b = np.concatenate([np.zeros(n * S), x0, x1])
    AAT_inv = np.linalg.inv(A @ A.T)

    def fun(z):
        X = z[:nx].reshape(S + 1, n)
        U = z[nx:].reshape(S, n)
        mid = 0.5 * (X[:-1] + X[1:])
        Wn = metric.W_values(mid[:, var])
        try:
            np.linalg.cholesky(Wn)
        except np.linalg.LinAlgError:
            return np.inf, np.zeros(nv)
        Mn = np.linalg.inv(Wn)
        MU = np.einsum('kij,kj->ki', Mn, U)
        J = h * float(np.einsum('ki,ki->k', U, MU).sum())
        gU = 2.0 * h * MU
        Wp = metric.W_prime_values(mid[:, var])
        q = -h * np.einsum('ki,kij,kj->k', MU, Wp, MU)   # d(u^T M u)/d mid_var
        gX = np.zeros((S + 1, n))
        gX[:-1, var] += 0.5 * q
        gX[1:, var] += 0.5 * q
        return J, np.concatenate([gX.ravel(), gU.ravel()])

    # straight-line initialization: exactly feasible, constant control
    X0 = x0 + np.linspace(0.0, 1.0, S + 1)[:, None] * (x1 - x0)
    U0 = np.tile(x1 - x0, (S, 1))
    z0 = np.concatenate([X0.ravel(), U0.ravel()])
    z, _, _, conv = _minimize_ec_bfgs(fun, z0, A, AAT_inv, cfg)
    elapsed = time.perf_counter() - t0

    X = z[:nx].reshape(S + 1, n)
    U = z[nx:].reshape(S, n)
    E, unif = _path_energy(metric, X, U)
    return ShootingResult(path=X, energy=E, uniformity_error=unif,
                          time=elapsed, converged=conv)


def _path_energy(metric, X, U, points_per_segment=10):
    """Energy and uniformity error of a piecewise-linear path by per-segment
    Gauss-Legendre quadrature of e(s) = u^T M(x(s)) u."""
    S = U.shape[0]
    h = 1.0 / S
    tg, wg = np.polynomial.legendre.leggauss(points_per_segment)
    taus = 0.5 * (tg + 1.0)
    pts = X[:-1, None, :] + taus[None, :, None] * (X[1:] - X[:-1])[:, None, :]
    xv = pts[..., metric.var_index].ravel()
    Mn = metric.M_values(xv, check=False)
    Urep = np.repeat(U, points_per_segment, axis=0)
    e = np.einsum('ki,kij,kj->k', Urep, Mn, Urep)
    wts = np.tile(0.5 * h * wg, S)
    E = float(wts @ e)
    if E <= 0.0:
        return E, 0.0
    unif = float(np.sqrt(max(0.0, float(wts @ (e - E) ** 2))) / E)
    return E, unif
