"""Per-critical-value Puiseux data.

Closed-form one-critical-point periods, period expansions of vanishing
cycles through the R-matrix, V-matrices from the symplectic generating
relation, and the diagonal propagator expansion.  Everything here is a
convergent Puiseux series in s = (lam - u_i)**(1/2); the factorial growth
of the R-coefficients is compensated by the factorial decay of the
closed-form period coefficients, so truncations behave like geometric
tails.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .frobenius import AnModel, CanonicalFrame
from .rmatrix import RMatrix, _double_factorial_odd
from .series import MatrixSeriesZ, PuiseuxSeries, TruncationError

__all__ = [
    "a1_period",
    "a1_coeff",
    "period_expansion_pairing",
    "period_expansion_upper",
    "v_matrices",
    "propagator_diag",
    "LocalExpansion",
]


@lru_cache(maxsize=4096)
def a1_coeff(k: int) -> complex:
    """Coefficient of the single-term period (lam-u)^{-k-1/2} at one Morse point.

    c_0 = sqrt(2); the ladder c_{k+1} = -(2k+1)/2 c_k keeps d/d(lam)
    compatibility exact in both directions.
    """
    if k == 0:
        return complex(np.sqrt(2.0))
    if k > 0:
        return -(2 * (k - 1) + 1) / 2.0 * a1_coeff(k - 1)
    # k < 0: invert the ladder
    return a1_coeff(k + 1) / (-(2 * k + 1) / 2.0)


def a1_period(k: int, u: complex, order: int | None = None) -> PuiseuxSeries:
    """Closed-form period of the one-critical-point model, exact single term."""
    ser = PuiseuxSeries.monomial(u, -2 * k - 1, a1_coeff(k))
    if order is not None:
        ser = ser.truncate(order)
    return ser


def v_matrices(R: MatrixSeriesZ, atol: float = 1e-8) -> np.ndarray:
    """V_{kl} with sum V_{kl} w^k z^l = (1 - R(-w)^T R(-z)) / (w + z).

    Returns an array V[k, l] for k + l <= K - 1 (zero-padded square array).
    The numerator must vanish at w = -z, which is unitarity; a violation
    makes the division inconsistent and raises.
    """
    K = R.K
    N = R.N
    num = np.zeros((K + 1, K + 1, N, N), dtype=complex)
    for k in range(K + 1):
        for l in range(K + 1):
            num[k, l] = -((-1.0) ** (k + l)) * R[k].T @ R[l]
            if k == 0 and l == 0:
                num[k, l] += np.eye(N)
    # consistency: numerator vanishes on w = -z
    scale = max(np.max(np.abs(num)), 1.0)
    for m in range(K + 1):
        acc = sum((-1.0) ** k * num[k, m - k] for k in range(m + 1))
        if np.max(np.abs(acc)) > atol * scale:
            raise ArithmeticError(
                f"V-matrix numerator fails to vanish at w=-z (order {m}): "
                f"{np.max(np.abs(acc)):.2e}"
            )
    V = np.zeros((K, K, N, N), dtype=complex)
    # num_{k,l} = V_{k-1,l} + V_{k,l-1}
    for k in range(K):
        for l in range(K):
            if k + l > K - 1:
                continue
            acc = num[k, l + 1].copy()
            if k > 0:
                acc -= V[k - 1, l + 1]
            V[k, l] = acc
    return V


class LocalExpansion:
    """Puiseux expansions of the vanishing-cycle data at one critical value.

    All series are centered at u_i and derived from
    f_beta = Psi R(z) e_i f_{A1}, so the coefficient of s^{2l - 2k - 1} in
    the period of index k is (-1)^l Psi R_l e_i times the closed-form
    coefficient; each Puiseux coefficient involves exactly one R_l.
    """

    def __init__(self, model: AnModel, frame: CanonicalFrame, rmatrix: RMatrix, i: int):
        self.model = model
        self.frame = frame
        self.R = rmatrix.R
        self.i = i
        self.u = complex(model.u[i])
        K = self.R.K
        # w[l] = (-1)^l Psi R_l e_i: flat-frame (upper) components
        self.w_upper = np.array(
            [(-1.0) ** l * (frame.Psi @ self.R[l][:, i]) for l in range(K + 1)]
        )
        self.w_lower = self.w_upper @ model.eta  # pairing components (., v_a)
        self._V = None

    @property
    def K(self) -> int:
        return self.R.K

    def pairing(self, k: int, a: int) -> PuiseuxSeries:
        """(I^{(k)}_{beta_i}(t, lam), v_a) as a Puiseux series in s."""
        coeffs = {
            2 * l - 2 * k - 1: self.w_lower[l, a] * a1_coeff(k - l)
            for l in range(self.K + 1)
        }
        return PuiseuxSeries(self.u, coeffs, trunc_order=2 * self.K - 2 * k - 1 + 1)

    def upper(self, k: int, c: int) -> PuiseuxSeries:
        """Flat-frame component c of I^{(k)}_{beta_i}(t, lam)."""
        coeffs = {
            2 * l - 2 * k - 1: self.w_upper[l, c] * a1_coeff(k - l)
            for l in range(self.K + 1)
        }
        return PuiseuxSeries(self.u, coeffs, trunc_order=2 * self.K - 2 * k - 1 + 1)

    def y_density(self) -> PuiseuxSeries:
        """(I^{(-1)}_{beta_i}, 1): the kernel denominator density."""
        return self.pairing(-1, self.model.N - 1)


def period_expansion_pairing(
    model: AnModel, frame: CanonicalFrame, rmatrix: RMatrix, i: int, k: int, a: int
) -> PuiseuxSeries:
    """Convenience wrapper over :class:`LocalExpansion`."""
    return LocalExpansion(model, frame, rmatrix, i).pairing(k, a)


def period_expansion_upper(
    model: AnModel, frame: CanonicalFrame, rmatrix: RMatrix, i: int, k: int, c: int
) -> PuiseuxSeries:
    return LocalExpansion(model, frame, rmatrix, i).upper(k, c)


def propagator_diag(
    model: AnModel,
    frame: CanonicalFrame,
    rmatrix: RMatrix,
    i: int,
    m: int = 0,
    V: np.ndarray | None = None,
) -> PuiseuxSeries:
    """Coefficient of (mu-lam)^m in P_{beta_i,beta_i}(t,lam;mu-lam) - 2/(lam-mu)^2.

    Built from the exact two-variable representation: the universal
    singular part (mu+lam-2u)/((lam-mu)^2 sqrt(lam-u) sqrt(mu-u)) plus the
    V-matrix double sum, both expanded around mu = lam.  Only m = 0 enters
    the recursion; higher m are exposed for completeness.
    """
    if V is None:
        V = v_matrices(rmatrix.R)
    K = rmatrix.R.K
    u = complex(model.u[i])
    from math import comb

    def binom_half(alpha: float, j: int) -> float:
        # generalized binomial (alpha choose j)
        out = 1.0
        for r in range(j):
            out *= (alpha - r) / (r + 1)
        return out

    coeffs: dict[int, complex] = {}
    # singular part: h^m coefficient is [2 C(-1/2, m+2) + C(-1/2, m+1)] x^{-m-2}
    sing = 2.0 * binom_half(-0.5, m + 2) + binom_half(-0.5, m + 1)
    coeffs[2 * (-m - 2)] = sing
    # V part: sum over k, l with x^{k+l-1-m}
    for k in range(K):
        for l in range(K):
            if k + l > K - 1:
                continue
            vii = V[k, l][i, i]
            if vii == 0:
                continue
            w = (
                2.0 ** (k + l + 1)
                * binom_half(k - 0.5, m)
                / (_double_factorial_odd(k) * _double_factorial_odd(l))
            )
            e = 2 * (k + l - 1 - m)
            coeffs[e] = coeffs.get(e, 0.0) + w * vii
    trunc = 2 * (K - 1 - m - 1) + 1  # last V-diagonal k+l = K-1 may be incomplete
    return PuiseuxSeries(u, coeffs, trunc_order=trunc)
