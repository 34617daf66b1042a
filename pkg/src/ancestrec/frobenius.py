"""Frobenius-manifold data of a one-variable A_n singularity.

The deformed potential is normalized as

    F(t, x) = x**(n+1)/(n+1) + t1*x**(n-1) + t2*x**(n-2) + ... + tn

so that dF/d(tn) = 1 is the unit direction.  All algebraic data (flat
coordinates, residue pairing, multiplication, Euler field) is polynomial in
t and is computed exactly up to floating-point roundoff; none of it needs
semisimplicity.  The canonical frame (Psi, U, theta, mu) does, and refuses
to build at a caustic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .series import ComplexPolynomial, poly_roots

__all__ = ["AnModel", "CanonicalFrame", "build_model", "flat_coordinates", "canonical_frame", "CausticError"]

P = np.polynomial.polynomial

DEFAULT_GAP = 1e-6


class CausticError(ValueError):
    """Operation requires distinct critical values."""


def _potential_coeffs(n: int, t: np.ndarray) -> np.ndarray:
    """Ascending coefficients of F(t, x)."""
    c = np.zeros(n + 2, dtype=complex)
    c[n + 1] = 1.0 / (n + 1)
    for a in range(1, n + 1):
        c[n - a] += t[a - 1]
    return c


def _series_coeff_at_inv(num: np.ndarray, den: np.ndarray, power: int) -> complex:
    """Coefficient of x^{-power} in num(x)/den(x) expanded at x = infinity.

    den must be monic-leading.  Used for the residue pairing as a trace form,
    valid at caustic points too.
    """
    # write num/den = sum_{j} c_j x^{deg(num)-deg(den)-j}; long division in
    # descending powers
    nd = num.size - 1
    dd = den.size - 1
    lead = den[dd]
    # number of series terms needed
    terms = power + nd - dd + 1
    if terms <= 0:
        return 0.0
    num_desc = num[::-1].astype(complex)
    den_desc = den[::-1] / lead
    out = np.zeros(terms, dtype=complex)
    work = np.zeros(terms + dd, dtype=complex)
    work[: min(num_desc.size, work.size)] = num_desc[: work.size]
    for j in range(terms):
        c = work[j]
        out[j] = c
        if c != 0:
            upto = min(dd + 1, work.size - j)
            work[j : j + upto] -= c * den_desc[:upto]
    # out[j] is the coefficient of x^{nd-dd-j}
    j = nd - dd + power
    val = out[j] / lead if 0 <= j < terms else 0.0
    return complex(val)


def flat_coordinates(n: int, t) -> tuple[np.ndarray, np.ndarray]:
    """Flat coordinates tau(t) and the Jacobian d(tau)/d(t).

    tau_a is the residue at infinity of F**(a/(n+1)) dx, normalized so that
    tau_a = t^a + O(t^2).  For A_n the expansion terminates, so the result
    is exact; eta-constancy is enforced by tests rather than trusted.
    """
    t = np.asarray(t, dtype=complex)
    # w(x) = (n+1) * sum_a t_a x^{-(a+1)}; F^{s} = x^a/(n+1)^s (1+w)^s
    # tau_a = kappa_a * Res_inf F^{a/(n+1)} dx,  kappa_a = -(n+1)^{a/(n+1)}/a
    # We need, for each a, the x^{-1} coefficient of x^a (1+w)^s, i.e. the
    # total-weight-(a+1) part of (1+w)^s where the term t_b has weight b+1.
    tau = np.zeros(n, dtype=complex)
    jac = np.zeros((n, n), dtype=complex)
    for a in range(1, n + 1):
        s = a / (n + 1)
        # weighted polynomial ring: coefficient array indexed by weight
        # (1+w)^s expanded through weight a+1; w-power p <= a+1
        maxw = a + 1
        acc = np.zeros(maxw + 1, dtype=complex)  # value terms by weight
        acc_d = np.zeros((n, maxw + 1), dtype=complex)  # d/dt_b
        acc[0] = 1.0
        # w as weight-array and its derivative structure
        w = np.zeros(maxw + 1, dtype=complex)
        for b in range(1, n + 1):
            if b + 1 <= maxw:
                w[b + 1] = (n + 1) * t[b - 1]
        binom = 1.0
        wp = np.zeros(maxw + 1, dtype=complex)
        wp[0] = 1.0
        wp_d = np.zeros((n, maxw + 1), dtype=complex)
        total = np.zeros(maxw + 1, dtype=complex)
        total_d = np.zeros((n, maxw + 1), dtype=complex)
        total[0] = 1.0
        for p in range(1, maxw + 1):
            binom *= (s - (p - 1)) / p
            # wp <- wp * w (weight-truncated), wp_d by product rule
            new = np.zeros(maxw + 1, dtype=complex)
            new_d = np.zeros((n, maxw + 1), dtype=complex)
            for wgt in range(maxw + 1):
                if wp[wgt] == 0 and not wp_d[:, wgt].any():
                    continue
                for b in range(1, n + 1):
                    wb = wgt + b + 1
                    if wb > maxw:
                        continue
                    cw = (n + 1) * t[b - 1]
                    new[wb] += wp[wgt] * cw
                    new_d[:, wb] += wp_d[:, wgt] * cw
                    new_d[b - 1, wb] += wp[wgt] * (n + 1)
            wp, wp_d = new, new_d
            total += binom * wp
            total_d += binom * wp_d
            if not wp.any() and not wp_d.any():
                break
        coeff = total[a + 1] / (n + 1) ** s
        coeff_d = total_d[:, a + 1] / (n + 1) ** s
        kappa = -((n + 1) ** s) / a
        # Res_inf = -coeff_{x^{-1}}
        tau[a - 1] = kappa * (-coeff)
        jac[a - 1, :] = kappa * (-coeff_d)
    return tau, jac


@dataclass(frozen=True)
class AnModel:
    """A_n singularity data at a parameter point t."""

    n: int
    t: np.ndarray
    F: ComplexPolynomial
    dF: ComplexPolynomial
    xi: np.ndarray  # critical points, ordered with u
    u: np.ndarray  # critical values, lexicographically sorted
    Delta: np.ndarray  # Hessians d^2F/dx^2 at xi
    tau: np.ndarray
    jac_tau_t: np.ndarray  # d(tau)/d(t)
    jac_t_tau: np.ndarray  # d(t)/d(tau)
    v_polys: tuple[ComplexPolynomial, ...]  # v_a = dF/d(tau_a) as x-polynomials
    du_dtau: np.ndarray  # [i, a] = du_i/d(tau_a) = v_a(xi_i)
    eta: np.ndarray
    eta_inv: np.ndarray
    structure: np.ndarray  # c[a, b, c]: v_a * v_b = sum_c c[a,b,c] v_c
    mult: np.ndarray  # mult[a] = matrix of multiplication by v_a, flat frame
    euler_mult: np.ndarray  # matrix of E*, flat frame
    d: float
    degrees: np.ndarray  # spectrum d_1..d_N
    rho: np.ndarray  # constant part of E (identically zero for A_n)
    semisimple: bool
    near_multiple: bool
    gap: float

    @property
    def N(self) -> int:
        return self.n

    def theta_diag(self) -> np.ndarray:
        """Hodge grading operator in the flat frame (diagonal entries)."""
        return self.d / 2.0 - self.degrees

    def pair(self, w1: np.ndarray, w2: np.ndarray) -> complex:
        """Residue pairing of two flat-frame vectors."""
        return complex(w1 @ self.eta @ w2)


def _reduce_mod(poly_c: np.ndarray, dF: np.ndarray) -> np.ndarray:
    """Remainder of poly modulo dF (both ascending coefficient arrays)."""
    r = poly_c.astype(complex).copy()
    dd = dF.size - 1
    lead = dF[-1]
    while r.size - 1 >= dd and np.any(r):
        k = r.size - 1
        if r[k] == 0:
            r = r[:-1]
            continue
        q = r[k] / lead
        r[k - dd : k + 1] -= q * dF
        r = r[:-1]
    out = np.zeros(dd, dtype=complex)
    out[: r.size] = r[: dd]
    return out


def build_model(n: int, t, gap: float = DEFAULT_GAP) -> AnModel:
    """Construct the full A_n Frobenius data at the point t."""
    if n < 1:
        raise ValueError("n must be >= 1")
    t = np.asarray(t, dtype=complex)
    if t.shape != (n,):
        raise ValueError(f"t must have length n={n}")
    if not np.all(np.isfinite(t)):
        raise ValueError("t must be finite")

    Fc = _potential_coeffs(n, t)
    F = ComplexPolynomial(Fc)
    dFc = P.polyder(Fc)
    dF = ComplexPolynomial(dFc)

    xi, near = poly_roots(dF, tol=1e-9, merge_threshold=gap)
    u = F(xi)
    order = np.lexsort((u.imag.round(10), u.real.round(10)))
    xi, u = xi[order], u[order]
    ddF = dF.derivative()
    Delta = np.atleast_1d(ddF(xi)).astype(complex)

    umax = 1.0 + np.max(np.abs(u))
    mingap = np.inf
    for i in range(n):
        for j in range(i + 1, n):
            mingap = min(mingap, abs(u[i] - u[j]))
    semisimple = bool(mingap >= gap * umax)

    tau, jac = flat_coordinates(n, t)
    jac_inv = np.linalg.inv(jac)

    # v_a = dF/d(tau_a) = sum_b (dt^b/dtau_a) x^{n-b}
    v_polys = []
    for a in range(n):
        c = np.zeros(n, dtype=complex)
        for b in range(n):
            c[n - 1 - b] += jac_inv[b, a]  # x^{n-(b+1)} coefficient
        v_polys.append(ComplexPolynomial(c))

    du = np.zeros((n, n), dtype=complex)
    for a in range(n):
        du[:, a] = v_polys[a](xi)

    # residue pairing as a trace form at infinity: eta_ab = [x^{-1}] v_a v_b / F'
    eta = np.zeros((n, n), dtype=complex)
    for a in range(n):
        for b in range(a, n):
            num = P.polymul(v_polys[a].coeffs, v_polys[b].coeffs)
            eta[a, b] = eta[b, a] = _series_coeff_at_inv(num, dFc, 1)
    eta_inv = np.linalg.inv(eta)

    # structure constants: v_a v_b mod F' expanded back in the v-basis
    basis = np.zeros((n, n), dtype=complex)  # basis[:, a] = coeffs of v_a
    for a in range(n):
        basis[: v_polys[a].coeffs.size, a] = v_polys[a].coeffs
    basis_inv = np.linalg.inv(basis)
    structure = np.zeros((n, n, n), dtype=complex)
    for a in range(n):
        for b in range(a, n):
            prod = P.polymul(v_polys[a].coeffs, v_polys[b].coeffs)
            red = _reduce_mod(prod, dFc)
            coords = basis_inv @ red
            structure[a, b, :] = coords
            structure[b, a, :] = coords
    mult = np.array([structure[a].T for a in range(n)])  # mult[a][c, b] = c_{ab}^c

    # Euler multiplication: the class of F itself
    # euler_mult[c, b]: E * v_b = sum_c euler_mult[c, b] v_c
    eu = _reduce_mod(Fc, dFc)
    eu_coords = basis_inv @ eu
    euler_mult = np.einsum("a,abc->cb", eu_coords, structure)

    d = (n - 1) / (n + 1)
    degrees = np.array([(n - a) / (n + 1) for a in range(1, n + 1)])

    return AnModel(
        n=n,
        t=t,
        F=F,
        dF=dF,
        xi=xi,
        u=u,
        Delta=Delta,
        tau=tau,
        jac_tau_t=jac,
        jac_t_tau=jac_inv,
        v_polys=tuple(v_polys),
        du_dtau=du,
        eta=eta,
        eta_inv=eta_inv,
        structure=structure,
        mult=mult,
        euler_mult=euler_mult,
        d=d,
        degrees=degrees,
        rho=np.zeros(n, dtype=complex),
        semisimple=semisimple,
        near_multiple=near or not semisimple,
        gap=gap,
    )


@dataclass(frozen=True)
class CanonicalFrame:
    """Normalized canonical frame at a semisimple point."""

    Psi: np.ndarray  # Psi[a, i] = sqrt(Delta_i) dtau_a/du_i
    PsiInv: np.ndarray  # PsiInv[i, a] = du_i/dtau_a / sqrt(Delta_i)
    U: np.ndarray  # diag of critical values
    theta: np.ndarray  # diagonal matrix, flat frame
    mu: np.ndarray  # PsiInv @ theta @ Psi
    sqrt_delta: np.ndarray
    branch: np.ndarray  # chosen sign per critical point

    @property
    def N(self) -> int:
        return self.U.shape[0]


def canonical_frame(model: AnModel, branch=None) -> CanonicalFrame:
    """Build Psi, U, theta, mu; refuses at a caustic.

    ``branch`` optionally flips the sign of selected sqrt(Delta_i); every
    downstream correlator is independent of this choice (tested), so the
    default is the principal branch.
    """
    if not model.semisimple:
        raise CausticError("canonical frame needs distinct critical values")
    N = model.N
    sd = np.sqrt(model.Delta.astype(complex))
    if branch is not None:
        sd = sd * np.asarray(branch)
    dtau_du = np.linalg.inv(model.du_dtau)  # [a, i] = dtau_a/du_i
    Psi = dtau_du * sd[np.newaxis, :]
    PsiInv = model.du_dtau / sd[:, np.newaxis]
    U = np.diag(model.u)
    theta = np.diag(model.theta_diag())
    mu = PsiInv @ theta @ Psi
    err = np.max(np.abs(Psi @ PsiInv - np.eye(N)))
    if err > 1e-10:
        raise ArithmeticError(f"Psi inverse pair residual {err:.2e}")
    return CanonicalFrame(
        Psi=Psi,
        PsiInv=PsiInv,
        U=U,
        theta=theta,
        mu=mu,
        sqrt_delta=sd,
        branch=np.ones(N) if branch is None else np.asarray(branch),
    )
