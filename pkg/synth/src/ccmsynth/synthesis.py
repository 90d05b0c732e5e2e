"""Offline synthesis of a polynomial dual contraction metric.

Searches for W(x_v) = W0 + W1 x_v + W2 x_v^2 and rho(x_v) = rho0 + rho1 x_v
+ rho2 x_v^2 making the contraction inequality hold on a box, certified by
interval sum-of-squares identities (one per face of the affine variable)
rather than sampling. W0 is never free: it is pinned to P^{-1} from the
continuous algebraic Riccati equation with unit weights, and rho0 stays at
its spec value, so the resulting feedback reduces to the LQR gain at the
origin. The output is a metric JSON file in the format the ccmgeo package
loads; that file is the only interface between the two packages.

Synthesis is a one-shot offline step: the consuming package commits the
emitted file as a fixture and never re-runs the SDP in its test loop.
"""
import json
from dataclasses import dataclass, replace
from importlib import resources

import cvxpy as cp
import numpy as np
from scipy.linalg import solve_continuous_are

from .sos import contraction_coefficients, interval_sos

__all__ = [
    "SynthesisSpec",
    "SynthesisResult",
    "BoundaryCheck",
    "InfeasibleError",
    "SpecFormatError",
    "load_spec",
    "case_study_spec",
    "boundary_solution",
    "synthesize",
    "write_metric",
    "verify_boundary",
]

# plant used when verify_boundary is given no system: the stiff three-state
# benchmark the shipped case-study spec targets
CASE_STUDY_A0 = np.array([[-1.0, 0.0, 1.0],
                          [0.0, -1.0, 1.0],
                          [0.0, -1.0, 0.0]])
CASE_STUDY_B = np.array([0.0, 0.0, 1.0])

_MODES = ("pin", "project", "margin")

# λ fallback ladder: searched downward from 1.0 in steps of 0.1
_LAMBDA_LADDER = tuple(round(1.0 - 0.1 * k, 1) for k in range(10))

_ACCEPT = ("optimal", "optimal_inaccurate")


class InfeasibleError(RuntimeError):
    """No certificate found; the message lists every attempted lambda."""


class SpecFormatError(ValueError):
    """Spec file malformed; message names the offending field."""


@dataclass(frozen=True)
class SynthesisSpec:
    """Problem data for one synthesis run.

    The Jacobian structure is A(x) = A0 + A_var * x_v + A_affine * x_a with
    x_v the metric variable (index var_index) and x_a one optional extra
    state entering affinely (index affine_index); the metric variable's
    drift is x_v' = drift_const + drift_var x_v + drift_affine x_a. The
    certificate covers |x_v| <= var_radius, |x_a| <= affine_radius.

    mode selects what the SDP optimizes once W0 and rho0 are pinned:
      pin      -- W1, W2 equal to the targets exactly; maximize the
                  contraction margin over (rho1, rho2)
      project  -- W1, W2 free; minimize distance to the targets at the
                  fixed margin
      margin   -- no targets; maximize the margin over everything
    lam is the contraction rate to certify; None searches downward from
    1.0 in steps of 0.1 and records the first rate that admits a
    certificate.
    """
    n: int
    A0: np.ndarray
    B: np.ndarray
    var_index: int = 0
    A_var: np.ndarray = None
    drift_const: float = 0.0
    drift_var: float = 0.0
    drift_affine: float = 0.0
    affine_index: int = None
    A_affine: np.ndarray = None
    var_radius: float = 1.0
    affine_radius: float = 0.0
    lam: float = 0.5
    rho0: float = 2.0
    w_degree: int = 2
    rho_degree: int = 2
    alpha_low: float = 1e-3
    rho_cap: float = 40.0
    margin: float = 1e-4
    mode: str = "margin"
    W1_target: np.ndarray = None
    W2_target: np.ndarray = None
    envelope_radius: float = None

    def __post_init__(self):
        conv = lambda M: None if M is None else np.asarray(M, dtype=float)
        object.__setattr__(self, "A0", conv(self.A0))
        object.__setattr__(self, "B", conv(self.B).reshape(self.n))
        A_var = conv(self.A_var)
        if A_var is None:
            A_var = np.zeros((self.n, self.n))
        object.__setattr__(self, "A_var", A_var)
        object.__setattr__(self, "A_affine", conv(self.A_affine))
        object.__setattr__(self, "W1_target", conv(self.W1_target))
        object.__setattr__(self, "W2_target", conv(self.W2_target))
        if self.A0.shape != (self.n, self.n):
            raise ValueError("A0 must be %d x %d" % (self.n, self.n))
        if self.lam is not None and self.lam <= 0:
            raise ValueError("contraction rate lambda must be positive")
        if self.alpha_low <= 0:
            raise ValueError("alpha_low must be positive")
        if self.rho0 < 0:
            raise ValueError("rho0 must be nonnegative")
        if self.w_degree not in (0, 2) or self.rho_degree not in (0, 2):
            raise ValueError("ansatz degrees are 0 (constant) or 2 "
                             "(quadratic)")
        if self.mode not in _MODES:
            raise ValueError("mode must be one of %s" % (_MODES,))
        if self.mode in ("pin", "project"):
            if self.W1_target is None or self.W2_target is None:
                raise ValueError("mode %r needs W1_target and W2_target"
                                 % self.mode)
            if self.w_degree != 2:
                raise ValueError("curvature targets need w_degree=2")
        if (self.affine_index is None) != (self.A_affine is None):
            raise ValueError("affine_index and A_affine go together")
        if self.var_radius <= 0:
            raise ValueError("var_radius must be positive")

    @property
    def has_affine(self):
        return self.affine_index is not None


@dataclass(frozen=True)
class SynthesisResult:
    feasible: bool
    lam: float
    attempted: tuple             # ((lambda, solver status), ...)
    W_coeffs: tuple              # (W0, W1, W2)
    rho_coeffs: tuple            # (rho0, rho1, rho2)
    margin: float                # certified eigenvalue margin of -R
    bounds: tuple                # recorded (alpha_low, alpha_high) envelope
    status: str
    spec: SynthesisSpec


@dataclass(frozen=True)
class BoundaryCheck:
    error: float                 # ||W0 - P^{-1}||_F
    passed: bool


# ---------------------------------------------------------------------------
# spec files
# ---------------------------------------------------------------------------

_SPEC_KEYS = {
    "n", "var_index", "A0", "A_var", "B", "drift_const", "drift_var",
    "drift_affine", "affine_index", "A_affine", "var_radius",
    "affine_radius", "lambda", "rho0", "w_degree", "rho_degree",
    "alpha_low", "rho_cap", "margin", "mode", "W1_target", "W2_target",
    "envelope_radius",
}


def load_spec(path):
    """Parse a SynthesisSpec from its JSON form."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecFormatError("spec file is not valid JSON: %s" % exc)
    if not isinstance(doc, dict):
        raise SpecFormatError("spec file must contain a JSON object")
    unknown = set(doc) - _SPEC_KEYS
    if unknown:
        raise SpecFormatError("unknown spec fields: %s"
                              % ", ".join(sorted(unknown)))
    for key in ("n", "A0", "B"):
        if key not in doc:
            raise SpecFormatError("spec file is missing field '%s'" % key)
    kwargs = dict(doc)
    kwargs["lam"] = kwargs.pop("lambda", 0.5)
    try:
        return SynthesisSpec(**kwargs)
    except (TypeError, ValueError) as exc:
        raise SpecFormatError("bad spec: %s" % exc)


def case_study_spec():
    """The committed spec that produced the ccmgeo metric fixture."""
    ref = resources.files("ccmsynth.data") / "case_study_spec.json"
    with resources.as_file(ref) as path:
        return load_spec(str(path))


# ---------------------------------------------------------------------------
# synthesis
# ---------------------------------------------------------------------------

def boundary_solution(A0, B):
    """W0 = P^{-1} with P from the Riccati equation (Q = R = identity)."""
    n = A0.shape[0]
    P = solve_continuous_are(A0, B.reshape(n, 1), np.eye(n), np.eye(1))
    W0 = np.linalg.inv(P)
    return 0.5 * (W0 + W0.T)


def _rho_companion(rho0, rho1, rho2):
    """PSD companion form certifying rho(x) >= 0 for every real x."""
    one = np.array([[1.0]])
    col = lambda e: cp.reshape(e, (1, 1), order="F")
    return cp.bmat([[one * rho0, col(rho1 / 2)],
                    [col(rho1 / 2), col(rho2)]]) >> 0


def _face_certificates(cons, spec, W, rho, lam, eps):
    """One interval SOS identity of -R - eps*I per affine-variable face."""
    R0, Ca = contraction_coefficients(spec, W, rho, lam)
    sigmas = (1.0, -1.0) if spec.has_affine else (0.0,)
    r_v, r_a = spec.var_radius, spec.affine_radius
    for sigma in sigmas:
        Ft = []
        for d in range(4):
            c = -1.0 * R0[d]
            if d == 0:
                c = c - eps * np.eye(spec.n)
            if d <= 2 and spec.has_affine:
                c = c - sigma * r_a * Ca[d]
            Ft.append(c * (r_v ** d))
        interval_sos(cons, Ft, spec.n)


def _attempt(spec, W0, lam):
    """One SDP solve at a fixed contraction rate; None when infeasible."""
    n = spec.n
    zero = np.zeros((n, n))
    if spec.mode == "pin":
        W1, W2 = spec.W1_target, spec.W2_target
    elif spec.w_degree == 0:
        W1, W2 = zero, zero
    else:
        W1 = cp.Variable((n, n), symmetric=True)
        W2 = cp.Variable((n, n), symmetric=True)
    if spec.rho_degree == 0:
        rho1, rho2 = 0.0, 0.0
    else:
        rho1, rho2 = cp.Variable(), cp.Variable()

    cons = []
    if spec.rho_degree == 2:
        cons.append(_rho_companion(spec.rho0, rho1, rho2))
        if spec.rho_cap is not None:
            cons += [rho2 <= spec.rho_cap, cp.abs(rho1) <= spec.rho_cap]

    slack = None
    if spec.mode in ("pin", "margin"):
        slack = cp.Variable(nonneg=True)
        eps = spec.margin + slack
        objective = cp.Maximize(slack)
    else:
        eps = spec.margin
        r = spec.var_radius
        objective = cp.Minimize(
            cp.sum_squares(W1 - spec.W1_target)
            + cp.sum_squares(cp.multiply(r, W2 - spec.W2_target))
            + 1e-6 * (cp.square(rho1) + cp.square(rho2)))

    _face_certificates(cons, spec, (W0, W1, W2), (spec.rho0, rho1, rho2),
                       lam, eps)
    # alpha_low * I <= W(t) across the interval
    r = spec.var_radius
    interval_sos(cons, [W0 - spec.alpha_low * np.eye(n),
                        r * W1, (r ** 2) * W2], n)

    prob = cp.Problem(objective, cons)
    try:
        prob.solve(solver=cp.CLARABEL)
    except cp.SolverError:
        return None, "solver error"
    if prob.status not in _ACCEPT:
        return None, prob.status

    take = lambda V: V if isinstance(V, np.ndarray) else 0.5 * (
        V.value + V.value.T)
    scal = lambda v: v if isinstance(v, float) else float(v.value)
    sol = {
        "W": (W0, take(W1), take(W2)),
        "rho": (float(spec.rho0), scal(rho1), scal(rho2)),
        "margin": spec.margin + (float(slack.value) if slack is not None
                                 else 0.0),
    }
    return sol, prob.status


def _eigen_envelope(W_coeffs, radius):
    """Rounded (alpha_low, alpha_high) eigenvalue bounds of W on the box."""
    W0, W1, W2 = W_coeffs
    lo, hi = np.inf, -np.inf
    for xv in np.linspace(-radius, radius, 4201):
        ev = np.linalg.eigvalsh(W0 + xv * W1 + xv * xv * W2)
        lo = min(lo, ev[0])
        hi = max(hi, ev[-1])
    return (float(np.floor(lo * 1e4) / 1e4 * 0.9),
            float(np.ceil(hi / 10.0) * 10.0))


def synthesize(spec):
    """Solve the synthesis SDP, walking the lambda ladder when asked.

    A spec with a concrete lam gets exactly one attempt; lam=None tries
    1.0, 0.9, ... 0.1 and keeps the first certified rate. Raises
    InfeasibleError listing every attempted rate when nothing certifies.
    """
    W0 = boundary_solution(spec.A0, spec.B)
    schedule = (spec.lam,) if spec.lam is not None else _LAMBDA_LADDER
    attempted = []
    for lam in schedule:
        sol, status = _attempt(spec, W0, lam)
        attempted.append((lam, status))
        if sol is not None:
            radius = (spec.envelope_radius if spec.envelope_radius
                      is not None else spec.var_radius)
            return SynthesisResult(
                feasible=True, lam=float(lam), attempted=tuple(attempted),
                W_coeffs=sol["W"], rho_coeffs=sol["rho"],
                margin=sol["margin"],
                bounds=_eigen_envelope(sol["W"], radius),
                status=status, spec=spec)
    raise InfeasibleError(
        "no contraction certificate found; attempted "
        + ", ".join("lambda=%g (%s)" % (l, s) for l, s in attempted))


# ---------------------------------------------------------------------------
# output and verification
# ---------------------------------------------------------------------------

def write_metric(result, path):
    """Emit the synthesized metric in the consumer's JSON format."""
    doc = {
        "n": result.spec.n,
        "var_index": result.spec.var_index,
        "lambda": result.lam,
        "W": [np.asarray(Wp).tolist() for Wp in result.W_coeffs],
        "rho": [float(r) for r in result.rho_coeffs],
        "bounds": list(result.bounds),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def verify_boundary(metric_path, A0=None, B=None, tol=1e-6):
    """Check a metric file's W0 against the Riccati boundary condition.

    Recomputes P independently of whatever produced the file and returns
    the Frobenius error of W0 - P^{-1}. Defaults to the case-study plant.
    """
    A0 = CASE_STUDY_A0 if A0 is None else np.asarray(A0, dtype=float)
    B = CASE_STUDY_B if B is None else np.asarray(B, dtype=float)
    with open(metric_path) as fh:
        doc = json.load(fh)
    W0 = np.asarray(doc["W"][0], dtype=float)
    err = float(np.linalg.norm(W0 - boundary_solution(A0, B)))
    return BoundaryCheck(error=err, passed=bool(err < tol))
