"""Givental R-matrix by formal stationary phase, with certification.

The asymptotic solution Psi R(z) exp(U/z) of the flat connection is built
column by column from formal Gaussian (Wick) expansions at the critical
points: no quadrature, every coefficient is a finite sum.  The connection
equations and the symplectic condition are then checked as certificates,
never used as the constructor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frobenius import AnModel, CanonicalFrame, CausticError
from .series import ComplexPolynomial, MatrixSeriesZ

__all__ = ["RMatrix", "saddle_expansion", "compute_r", "verify_r"]


def _double_factorial_odd(q: int) -> float:
    """(2q-1)!! with the empty product at q=0."""
    out = 1.0
    for j in range(1, q + 1):
        out *= 2 * j - 1
    return out


def saddle_expansion(
    model: AnModel, i: int, phi: ComplexPolynomial, K: int
) -> np.ndarray:
    """Formal Gaussian expansion of the normalized saddle integral at xi_i.

    Expands <phi(xi_i + y) * exp(sum_{m>=3} T_m y^m / z)> through z^K, where
    T_m is the degree-m Taylor coefficient of F at xi_i and the Gaussian
    moments are <y^{2q}> = (2q-1)!! (-z/Delta_i)^q.  Each cubic-or-higher
    vertex carries net z-weight >= 1/2, so the order-K truncation is a
    finite sum.  Returns the coefficient array of length K+1.
    """
    if K < 0:
        raise ValueError("K must be >= 0")
    xi = model.xi[i]
    delta = model.Delta[i]
    ftay = model.F.shift(xi)  # F(xi + y) coefficients in y
    vertex = np.zeros(ftay.size, dtype=complex)
    vertex[3:] = ftay[3:]
    phiy = phi.shift(xi)

    out = np.zeros(K + 1, dtype=complex)
    P = np.polynomial.polynomial
    # vp = vertex^p / p!, built iteratively; p vertices carry z^{-p}
    vp = np.array([1.0 + 0.0j])
    for p in range(0, 2 * K + 1):
        if p > 0:
            vp = P.polymul(vp, vertex) / p
            if not vp.any():
                break
        # combine with phi(xi+y) and take moments
        comb = P.polymul(vp, phiy) if phiy.size else np.zeros(1, dtype=complex)
        for ypow in range(comb.size):
            c = comb[ypow]
            if c == 0 or ypow % 2 == 1:
                continue
            q = ypow // 2
            order = q - p
            if 0 <= order <= K:
                out[order] += c * _double_factorial_odd(q) * (-1.0 / delta) ** q
    return out


@dataclass(frozen=True)
class RMatrix:
    """Truncated R-series with verification residuals."""

    R: MatrixSeriesZ
    frame: CanonicalFrame
    ode_residual: np.ndarray  # per k = 0..K-1
    unitarity_residual: np.ndarray  # per m = 0..K

    @property
    def K(self) -> int:
        return self.R.K

    def max_residual(self) -> float:
        vals = list(self.ode_residual) + list(self.unitarity_residual)
        return max(vals) if vals else 0.0


def compute_r(
    model: AnModel,
    frame: CanonicalFrame,
    K: int,
    residual_tol: float | None = None,
) -> RMatrix:
    """Assemble R(z) = Psi^T C(z) from per-critical-point saddle expansions.

    The column data C^a_i(z) = Delta_i^{-1/2} <dF/dtau_a ...>_i are the
    residue-pairing components of the asymptotic solution; contracting with
    Psi^T raises the index and strips the frame, leaving R_0 = I exactly.
    With ``residual_tol`` set, verification failures raise ArithmeticError
    carrying the residual table.
    """
    if not model.semisimple:
        raise CausticError("R-matrix requires a semisimple point")
    N = model.N
    C = np.zeros((K + 1, N, N), dtype=complex)  # [order, a, i]
    for i in range(N):
        for a in range(N):
            C[:, a, i] = saddle_expansion(model, i, model.v_polys[a], K)
        C[:, :, i] /= frame.sqrt_delta[i]
    coeffs = [frame.Psi.T @ C[k] for k in range(K + 1)]
    R = MatrixSeriesZ(coeffs)
    ode_res, uni_res = verify_r(R, frame)
    rm = RMatrix(R=R, frame=frame, ode_residual=ode_res, unitarity_residual=uni_res)
    if np.max(np.abs(R[0] - np.eye(N))) > 1e-12:
        raise ArithmeticError("R_0 deviates from the identity")
    if residual_tol is not None and rm.max_residual() > residual_tol:
        raise ArithmeticError(
            f"R verification residual {rm.max_residual():.3e} exceeds {residual_tol:.1e}; "
            f"ode={ode_res}, unitarity={uni_res}"
        )
    return rm


def verify_r(R: MatrixSeriesZ, frame: CanonicalFrame) -> tuple[np.ndarray, np.ndarray]:
    """Certificates for a candidate R-series.

    (a) coefficient recursion [U, R_{k+1}] = (mu - k) R_k, the z^k part of
        the z d/dz connection equation after substituting Psi R exp(U/z);
    (b) unitarity: R(z)^T R(-z) = I order by order, forced by finiteness of
        the V-generating function at w = -z.

    Residuals are relative to the norms of the participating coefficients.
    """
    K = R.K
    N = R.N
    U = frame.U
    mu = frame.mu
    ode = np.zeros(max(K, 0))
    for k in range(K):
        lhs = U @ R[k + 1] - R[k + 1] @ U
        rhs = (mu - k * np.eye(N)) @ R[k]
        scale = max(np.max(np.abs(rhs)), np.max(np.abs(R[k + 1])), 1e-30)
        ode[k] = np.max(np.abs(lhs - rhs)) / scale
    uni = np.zeros(K + 1)
    for m in range(K + 1):
        acc = np.zeros((N, N), dtype=complex)
        for a in range(m + 1):
            acc += R[a].T @ R[m - a] * (-1.0) ** (m - a)
        if m == 0:
            acc -= np.eye(N)
        scale = max(np.max(np.abs(R[m])), 1.0)
        uni[m] = np.max(np.abs(acc)) / scale
    return ode, uni
