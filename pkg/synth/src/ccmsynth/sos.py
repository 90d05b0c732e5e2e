"""Matrix sum-of-squares certificates on an interval.

A symmetric matrix polynomial F(t) of degree <= 4 is positive semidefinite
for every t in [-1, 1] iff it splits as

    F(t) = S0(t) + (1 - t^2) S1(t)

with S0, S1 SOS matrix polynomials (the matrix version of the classical
nonnegativity characterization on an interval). S0 is carried by a Gram
matrix on the basis (1, t, t^2) (x) R^n and S1 on (1, t) (x) R^n; matching
powers of t turns the split into linear equations between the Grams and the
coefficients, so the whole certificate is one small SDP block per identity.
"""
import cvxpy as cp
import numpy as np

__all__ = ["interval_sos", "contraction_coefficients"]


def _gram_diagonal_sum(Q, nblk, deg, n):
    """Sum of the n x n blocks of Q along the anti-diagonal p + q = deg."""
    out = None
    for p in range(nblk):
        q = deg - p
        if 0 <= q < nblk:
            term = Q[n * p:n * (p + 1), n * q:n * (q + 1)]
            out = term if out is None else out + term
    return out


def interval_sos(constraints, F_t, n):
    """Append constraints certifying F(t) >= 0 on [-1, 1].

    F_t is the coefficient list of F in powers of t (degree at most 4);
    entries may be constant arrays or cvxpy expressions, each n x n
    symmetric. The two Gram variables are returned so callers can inspect
    the certificate after solving.
    """
    if len(F_t) > 5:
        raise ValueError("interval certificate covers degree <= 4, got %d"
                         % (len(F_t) - 1))
    Q0 = cp.Variable((3 * n, 3 * n), symmetric=True)
    Q1 = cp.Variable((2 * n, 2 * n), symmetric=True)
    constraints += [Q0 >> 0, Q1 >> 0]
    for d in range(5):
        lhs = _gram_diagonal_sum(Q0, 3, d, n)
        add = _gram_diagonal_sum(Q1, 2, d, n)
        if add is not None:
            lhs = add if lhs is None else lhs + add
        # (1 - t^2) S1 contributes -t^2 * S1 coefficients two degrees up
        sub = _gram_diagonal_sum(Q1, 2, d - 2, n)
        if sub is not None:
            lhs = lhs - sub
        rhs = F_t[d] if d < len(F_t) else np.zeros((n, n))
        constraints.append(lhs == rhs)
    return Q0, Q1


def contraction_coefficients(spec, W, rho, lam):
    """Polynomial coefficients of the contraction expression R(x).

    With the dual metric W(x_v) = W0 + W1 x_v + W2 x_v^2, multiplier
    rho(x_v), Jacobian A(x) = A0 + A_var x_v + A_affine x_a and metric
    variable drift x_v' = c0 + cv x_v + ca x_a, the expression

        R(x) = -dW/dt + A W + W A^T - rho B B^T + 2 lam W

    (dW/dt = W'(x_v) x_v') is cubic in x_v and affine in x_a. Returns
    (R0, Ca): R0 the four x_v-coefficients of the x_a-free part, Ca the
    three x_v-coefficients multiplying x_a (Ca is zeros-shaped when the
    spec has no affine variable).
    """
    A0, Av = spec.A0, spec.A_var
    Aa = spec.A_affine
    BBT = np.outer(spec.B, spec.B)
    c0, cv, ca = spec.drift_const, spec.drift_var, spec.drift_affine
    W0, W1, W2 = W
    r0, r1, r2 = rho
    R0 = [A0 @ W0 + W0 @ A0.T - r0 * BBT + 2 * lam * W0 - c0 * W1,
          (A0 @ W1 + W1 @ A0.T + Av @ W0 + W0 @ Av.T - r1 * BBT
           + 2 * lam * W1 - cv * W1 - 2 * c0 * W2),
          (A0 @ W2 + W2 @ A0.T + Av @ W1 + W1 @ Av.T - r2 * BBT
           + 2 * lam * W2 - 2 * cv * W2),
          Av @ W2 + W2 @ Av.T]
    if Aa is None:
        z = np.zeros((spec.n, spec.n))
        Ca = [z, z, z]
    else:
        Ca = [Aa @ W0 + W0 @ Aa.T - ca * W1,
              Aa @ W1 + W1 @ Aa.T - 2 * ca * W2,
              Aa @ W2 + W2 @ Aa.T]
    return R0, Ca
