"""Control contraction metric pair (W(x), rho(x)) as matrix/scalar polynomials
in one designated state variable, with pointwise LMI validation.

The dual metric W(x) = sum_p W_p * x_v^p (x_v = x[var_index]) is the object
produced offline by SOS synthesis; the controller consumes M = W^{-1}. The
contraction condition checked here pointwise is

    R(x) = -Wdot + A W + W A^T - rho B B^T + 2 lambda W  <  0

with Wdot = sum_i (dW/dx_i) f_i(x) (drift term only; the metric depends on a
single variable whose derivative is control-independent for the shipped
system, so the input term vanishes identically).
"""
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

__all__ = [
    "PolynomialMetric",
    "LmiReport",
    "MetricFormatError",
    "SingularMetricError",
    "eval_W",
    "eval_M",
    "dW_dx",
    "energy_integrand",
    "validate_lmi",
    "load_metric",
    "save_metric",
    "case_study_metric",
]

COND_LIMIT = 1e12


class MetricFormatError(ValueError):
    """Raised when a metric file is malformed; message names the field."""


class SingularMetricError(RuntimeError):
    """W(x) is numerically singular (condition estimate beyond 1e12)."""


@dataclass(frozen=True)
class PolynomialMetric:
    n: int
    var_index: int
    W_coeffs: tuple          # (W_0, W_1, ...), each n x n symmetric
    rho_coeffs: tuple        # (rho_0, rho_1, ...)
    lam: float
    uniform_bounds: tuple = (0.0, float("inf"))

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("state dimension must be positive")
        if not 0 <= self.var_index < self.n:
            raise ValueError("var_index %d outside state dimension %d"
                             % (self.var_index, self.n))
        if self.lam <= 0:
            raise ValueError("contraction rate lambda must be positive")
        if len(self.W_coeffs) == 0:
            raise ValueError("W_coeffs must contain at least W_0")
        W = tuple(np.asarray(Wp, dtype=float) for Wp in self.W_coeffs)
        for p, Wp in enumerate(W):
            if Wp.shape != (self.n, self.n):
                raise ValueError("W_%d has shape %r, expected (%d, %d)"
                                 % (p, Wp.shape, self.n, self.n))
            if np.max(np.abs(Wp - Wp.T)) > 1e-12:
                raise ValueError("W_%d is not symmetric to 1e-12" % p)
        object.__setattr__(self, "W_coeffs", W)
        object.__setattr__(self, "rho_coeffs",
                           tuple(float(r) for r in self.rho_coeffs))

    # -- vectorized evaluators over an array of x_var values (the hot path) --

    def W_values(self, xv):
        """W at an array of scalar x_var values -> (m, n, n)."""
        xv = np.atleast_1d(np.asarray(xv, dtype=float))
        out = np.zeros((len(xv), self.n, self.n))
        p = np.ones_like(xv)
        for Wp in self.W_coeffs:
            out += p[:, None, None] * Wp
            p = p * xv
        return out

    def W_prime_values(self, xv):
        """dW/dx_var at an array of x_var values -> (m, n, n)."""
        xv = np.atleast_1d(np.asarray(xv, dtype=float))
        out = np.zeros((len(xv), self.n, self.n))
        p = np.ones_like(xv)
        for k, Wp in enumerate(self.W_coeffs[1:], start=1):
            out += k * p[:, None, None] * Wp
            p = p * xv
        return out

    def W_second_values(self, xv):
        """d2W/dx_var^2 at an array of x_var values -> (m, n, n)."""
        xv = np.atleast_1d(np.asarray(xv, dtype=float))
        out = np.zeros((len(xv), self.n, self.n))
        p = np.ones_like(xv)
        for k, Wp in enumerate(self.W_coeffs[2:], start=2):
            out += k * (k - 1) * p[:, None, None] * Wp
            p = p * xv
        return out

    def M_values(self, xv, check=True):
        """M = W^{-1} at an array of x_var values -> (m, n, n).

        Cholesky-probes positive definiteness and (when check=True) refuses
        condition estimates beyond COND_LIMIT; 64-bit energies are meaningless
        past that point.
        """
        Wn = self.W_values(xv)
        try:
            np.linalg.cholesky(Wn)
        except np.linalg.LinAlgError:
            raise SingularMetricError(
                "W(x) is not positive definite on the evaluation points")
        Mn = np.linalg.inv(Wn)
        Mn = 0.5 * (Mn + np.swapaxes(Mn, -1, -2))
        if check:
            # 1-norm condition estimate, vectorized over the stack
            cond = (np.abs(Wn).sum(axis=-2).max(axis=-1)
                    * np.abs(Mn).sum(axis=-2).max(axis=-1))
            if np.any(cond > COND_LIMIT):
                raise SingularMetricError(
                    "metric condition estimate %.3e exceeds %.0e"
                    % (float(np.max(cond)), COND_LIMIT))
        return Mn

    def rho_values(self, xv):
        """rho at an array of scalar x_var values -> (m,)."""
        xv = np.atleast_1d(np.asarray(xv, dtype=float))
        out = np.zeros_like(xv)
        p = np.ones_like(xv)
        for r in self.rho_coeffs:
            out += r * p
            p = p * xv
        return out


@dataclass(frozen=True)
class LmiReport:
    grid_description: str
    worst_eigenvalue: float
    worst_point: np.ndarray
    passed: bool


def eval_W(metric, x):
    """W(x) for a single state vector x."""
    x = np.asarray(x, dtype=float)
    if x.shape != (metric.n,):
        raise ValueError("state has shape %r, expected (%d,)"
                         % (x.shape, metric.n))
    return metric.W_values(x[metric.var_index])[0]


def eval_M(metric, x):
    """M(x) = W(x)^{-1}, symmetrized; errors if W is numerically singular."""
    x = np.asarray(x, dtype=float)
    if x.shape != (metric.n,):
        raise ValueError("state has shape %r, expected (%d,)"
                         % (x.shape, metric.n))
    return metric.M_values(x[metric.var_index])[0]


def dW_dx(metric, x, i):
    """dW/dx_i at x: zero unless i is the metric's polynomial variable."""
    if not 0 <= i < metric.n:
        raise ValueError("variable index %d outside state dimension %d"
                         % (i, metric.n))
    if i != metric.var_index:
        return np.zeros((metric.n, metric.n))
    x = np.asarray(x, dtype=float)
    return metric.W_prime_values(x[metric.var_index])[0]


def energy_integrand(metric, gamma_point, gamma_s_point):
    """e = gamma_s^T M(gamma) gamma_s >= 0."""
    g = np.asarray(gamma_point, dtype=float)
    gs = np.asarray(gamma_s_point, dtype=float)
    M = metric.M_values(g[metric.var_index])[0]
    return float(gs @ M @ gs)


def validate_lmi(metric, system, state_grid):
    """Pointwise contraction check over a grid of states.

    state_grid is an iterable of state vectors (or an array of shape (P, n)).
    Reports the most positive eigenvalue of R(x) over the grid; passes iff it
    is strictly negative everywhere.
    """
    pts = np.atleast_2d(np.asarray(state_grid, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("state grid is empty")
    if pts.shape[1] != metric.n:
        raise ValueError("grid points have dimension %d, expected %d"
                         % (pts.shape[1], metric.n))
    if getattr(system, "A", None) is None:
        raise ValueError("system does not provide a Jacobian evaluator")
    worst = -np.inf
    worst_x = pts[0]
    for x in pts:
        xv = x[metric.var_index]
        W = metric.W_values(xv)[0]
        Wp = metric.W_prime_values(xv)[0]
        fx = np.asarray(system.f(x, 0.0), dtype=float)
        Wdot = Wp * fx[metric.var_index]
        A = np.asarray(system.A(x, 0.0), dtype=float)
        B = np.asarray(system.B(x, 0.0), dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        BBT = B @ B.T
        rho = metric.rho_values(xv)[0]
        R = -Wdot + A @ W + W @ A.T - rho * BBT + 2.0 * metric.lam * W
        ev = float(np.linalg.eigvalsh(R)[-1])
        if ev > worst:
            worst, worst_x = ev, x
    return LmiReport(
        grid_description="%d points in R^%d" % (pts.shape[0], metric.n),
        worst_eigenvalue=worst,
        worst_point=np.array(worst_x),
        passed=bool(worst < 0.0),
    )


# ---------------------------------------------------------------------------
# metric file format (JSON): the contract with the offline synthesis step
# ---------------------------------------------------------------------------

def _require(doc, key, kind):
    if key not in doc:
        raise MetricFormatError("metric file is missing field %r" % key)
    val = doc[key]
    if kind is float and isinstance(val, int):
        val = float(val)
    if not isinstance(val, kind):
        raise MetricFormatError("metric field %r has type %s, expected %s"
                                % (key, type(val).__name__,
                                   getattr(kind, "__name__", kind)))
    return val


def load_metric(path):
    """Parse a metric JSON file; raises MetricFormatError naming the
    offending field on malformed input."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MetricFormatError("metric file is not valid JSON: %s" % exc)
    if not isinstance(doc, dict):
        raise MetricFormatError("metric file must contain a JSON object")
    n = _require(doc, "n", int)
    var_index = _require(doc, "var_index", int)
    lam = _require(doc, "lambda", float)
    W_raw = _require(doc, "W", list)
    rho_raw = _require(doc, "rho", list)
    bounds = doc.get("bounds", [0.0, float("inf")])
    if not (isinstance(bounds, list) and len(bounds) == 2):
        raise MetricFormatError("metric field 'bounds' must be a 2-list")
    W = []
    for p, Wp in enumerate(W_raw):
        arr = np.asarray(Wp, dtype=float)
        if arr.shape != (n, n):
            raise MetricFormatError(
                "metric field 'W'[%d] has shape %r, expected (%d, %d)"
                % (p, arr.shape, n, n))
        W.append(arr)
    if not W:
        raise MetricFormatError("metric field 'W' must be non-empty")
    try:
        return PolynomialMetric(
            n=n, var_index=var_index, W_coeffs=tuple(W),
            rho_coeffs=tuple(float(r) for r in rho_raw),
            lam=lam, uniform_bounds=(float(bounds[0]), float(bounds[1])))
    except (TypeError, ValueError) as exc:
        raise MetricFormatError(str(exc))


def save_metric(metric, path):
    """Write the JSON metric format (row-major matrices, ascending powers)."""
    doc = {
        "n": metric.n,
        "var_index": metric.var_index,
        "lambda": metric.lam,
        "W": [Wp.tolist() for Wp in metric.W_coeffs],
        "rho": list(metric.rho_coeffs),
        "bounds": list(metric.uniform_bounds),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def case_study_metric():
    """The committed case-study metric fixture (synthesized offline)."""
    ref = resources.files("ccmgeo").joinpath("data/case_study_metric.json")
    with resources.as_file(ref) as path:
        return load_metric(path)
