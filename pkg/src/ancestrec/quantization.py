"""Independent oracle: psi-class intersection numbers and direct quantization.

Two deliberately separate pipelines live here.  ``dvv_intersection`` is the
standard KdV/Virasoro recursion for <tau_{k1}...tau_{kn}>_g in exact
rational arithmetic.  ``ancestor_via_quantization`` evaluates the operator
definition of the total ancestor potential verbatim: the quantized
quadratic Hamiltonian of log R is applied, as a truncated differential
operator, to the product of one-point tau functions, and correlators are
read off from the logarithm.  Neither shares a code path with the residue
recursion.

Truncation of the Fock space is by the additive grading
chi = 2 * (hbar power) + (polynomial degree) = 2g - 2 + n.  The product
state only has chi >= 1 factors, chi is additive under products, and the
quantized Hamiltonian of a positive-z-power symplectic matrix never raises
it (the p p part trades two degrees for one hbar, the p q part is neutral,
the dilaton-shift constant lowers it), so a chi window is exact for every
correlator read off inside it.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache
from itertools import product as iproduct

import numpy as np

from .frobenius import AnModel, CanonicalFrame
from .rmatrix import RMatrix
from .series import MatrixSeriesZ

__all__ = [
    "dvv_intersection",
    "witten_correlator",
    "FockPolynomial",
    "omega_pairing",
    "quadratic_hamiltonian_terms",
    "dpt_log_factor",
    "ancestor_via_quantization",
]


# ----------------------------------------------------------------------
# Witten-Kontsevich intersection numbers by the DVV recursion
# ----------------------------------------------------------------------


def _dfact(m: int) -> int:
    """(2m+1)!! with (-1)!! = 1."""
    out = 1
    for j in range(1, m + 1):
        out *= 2 * j + 1
    return out


@lru_cache(maxsize=None)
def _dvv(g: int, ks: tuple) -> Fraction:
    n = len(ks)
    if n == 0 or 2 * g - 2 + n <= 0 or g < 0:
        return Fraction(0)
    if sum(ks) != 3 * g - 3 + n:
        return Fraction(0)
    if g == 0 and n == 3:
        return Fraction(1)
    if g == 1 and n == 1:
        return Fraction(1, 24)
    k1, rest = ks[0], ks[1:]  # ks sorted descending; dimension forces k1 >= 1
    acc = Fraction(0)
    for j, kj in enumerate(rest):
        others = rest[:j] + rest[j + 1 :]
        w = Fraction(_dfact(k1 + kj - 1), _dfact(kj - 1))
        acc += w * _dvv(g, tuple(sorted((k1 + kj - 1,) + others, reverse=True)))
    for a in range(0, k1 - 1):
        b = k1 - 2 - a
        w = Fraction(_dfact(a) * _dfact(b), 2)
        acc += w * _dvv(g - 1, tuple(sorted((a, b) + rest, reverse=True)))
        for split in range(1 << len(rest)):
            s1 = tuple(rest[j] for j in range(len(rest)) if split >> j & 1)
            s2 = tuple(rest[j] for j in range(len(rest)) if not (split >> j & 1))
            for g1 in range(0, g + 1):
                g2 = g - g1
                if 2 * g1 - 1 + len(s1) <= 0 or 2 * g2 - 1 + len(s2) <= 0:
                    continue
                acc += (
                    w
                    * _dvv(g1, tuple(sorted((a,) + s1, reverse=True)))
                    * _dvv(g2, tuple(sorted((b,) + s2, reverse=True)))
                )
    return acc / _dfact(k1)


def dvv_intersection(g: int, ks) -> Fraction:
    """Exact <tau_{k1} ... tau_{kn}>_g; raises on unstable input."""
    ks = tuple(int(k) for k in ks)
    if any(k < 0 for k in ks):
        raise ValueError("psi powers must be nonnegative")
    if not ks or 2 * g - 2 + len(ks) <= 0:
        raise ValueError(f"unstable range (g={g}, n={len(ks)})")
    return _dvv(g, tuple(sorted(ks, reverse=True)))


def witten_correlator(g: int, ks) -> float:
    """Float intersection number, zero off the dimension constraint."""
    ks = tuple(int(k) for k in ks)
    if not ks or 2 * g - 2 + len(ks) <= 0:
        return 0.0
    return float(_dvv(g, tuple(sorted(ks, reverse=True))))


# ----------------------------------------------------------------------
# truncated Fock polynomials
# ----------------------------------------------------------------------

Var = tuple[int, int]  # (psi power k, flat index a)


class FockPolynomial:
    """Sparse polynomial in the dilaton-shifted variables t_k^a.

    Monomials are sorted tuples of variables (k, a); coefficients are kept
    per integer hbar power.  Admission is governed by the chi window plus a
    z-weight cap (sum of k over the monomial), both additive under
    products.
    """

    __slots__ = ("data", "chi_max", "max_zweight")

    def __init__(self, chi_max: int, max_zweight: int, data=None):
        self.chi_max = chi_max
        self.max_zweight = max_zweight
        self.data: dict[tuple, dict[int, complex]] = {} if data is None else data

    def _admits(self, mono: tuple, h: int) -> bool:
        # 2*chi - zweight is additive under products and non-decreasing under
        # every piece of the quantized Hamiltonian (the p q part trades the
        # z-weight drop l for nothing, the dilaton constant trades a z-weight
        # drop >= 2 for one chi, the p p part only lowers z-weight), so this
        # window is exact for reading correlators with 2g - 2 + n <= chi_max.
        zw = sum(k for k, _ in mono)
        return 2 * (2 * h + len(mono)) - zw <= 2 * self.chi_max and zw <= self.max_zweight

    def clone_empty(self) -> "FockPolynomial":
        return FockPolynomial(self.chi_max, self.max_zweight)

    def copy(self) -> "FockPolynomial":
        return FockPolynomial(
            self.chi_max, self.max_zweight, {m: dict(hs) for m, hs in self.data.items()}
        )

    def add_term(self, mono: tuple, h: int, coeff: complex) -> None:
        if coeff == 0 or not self._admits(mono, h):
            return
        slot = self.data.setdefault(mono, {})
        new = slot.get(h, 0.0) + coeff
        if abs(new) < 1e-300:
            slot.pop(h, None)
            if not slot:
                del self.data[mono]
        else:
            slot[h] = new

    def iadd(self, other: "FockPolynomial", scale: complex = 1.0) -> None:
        for mono, hs in other.data.items():
            for h, c in hs.items():
                self.add_term(mono, h, c * scale)

    def coeff(self, mono, h: int) -> complex:
        return self.data.get(tuple(sorted(mono)), {}).get(h, 0.0)

    def is_zero(self) -> bool:
        return not self.data

    def multiply(self, other: "FockPolynomial") -> "FockPolynomial":
        out = self.clone_empty()
        for m1, h1s in self.data.items():
            for m2, h2s in other.data.items():
                mono = tuple(sorted(m1 + m2))
                if sum(k for k, _ in mono) > self.max_zweight:
                    continue
                for h1, c1 in h1s.items():
                    for h2, c2 in h2s.items():
                        out.add_term(mono, h1 + h2, c1 * c2)
        return out

    def exp(self) -> "FockPolynomial":
        """Truncated exponential; requires no constant monomial."""
        if () in self.data:
            raise ValueError("exp requires a vanishing constant term")
        out = self.clone_empty()
        out.add_term((), 0, 1.0)
        acc = self.copy()  # invariant: acc = self^j / j!
        out.iadd(acc)
        j = 1
        while True:
            j += 1
            acc = acc.multiply(self)
            for mono, hs in acc.data.items():
                for h in list(hs):
                    hs[h] /= j
            if acc.is_zero() or j > 200:
                break
            out.iadd(acc)
        return out

    def log_nonconst(self) -> "FockPolynomial":
        """Truncated log, constant Laurent part divided out and discarded."""
        const = dict(self.data.get((), {}))
        c0 = const.get(0, 0.0)
        if abs(c0) < 1e-12:
            raise ValueError("log requires a nonzero hbar^0 constant")
        # invert the constant hbar-series c(h) within the window
        hmin = -(self.chi_max)
        inv = {0: 1.0 / c0}
        rest = {h: c for h, c in const.items() if h != 0}
        # (c0 + r)^-1 = c0^-1 sum (-r/c0)^m
        powr = {0: 1.0}
        for _ in range(2 * self.chi_max + 2):
            new = {}
            for h1, c1 in powr.items():
                for h2, c2 in rest.items():
                    h = h1 + h2
                    if abs(h) > 2 * self.chi_max + 2:
                        continue
                    new[h] = new.get(h, 0.0) - c1 * c2 / c0
            powr = new
            if not powr:
                break
            for h, c in powr.items():
                inv[h] = inv.get(h, 0.0) + c / c0
        x = self.clone_empty()
        for mono, hs in self.data.items():
            if mono == ():
                continue
            for h, c in hs.items():
                for hi, ci in inv.items():
                    x.add_term(mono, h + hi, c * ci)
        out = x.clone_empty()
        acc = x.copy()
        out.iadd(acc)
        j = 1
        while True:
            j += 1
            acc = acc.multiply(x)
            if acc.is_zero() or j > 200:
                break
            out.iadd(acc, (-1.0) ** (j + 1) / j)
        out.data.pop((), None)
        return out

    def __repr__(self):
        return f"FockPolynomial({len(self.data)} monomials)"


# ----------------------------------------------------------------------
# symplectic pairing on Laurent vectors and the quantized Hamiltonian
# ----------------------------------------------------------------------


def omega_pairing(psi1: dict, psi2: dict, eta: np.ndarray) -> complex:
    """Omega(psi1, psi2) = Res_z (psi1(-z), psi2(z)) on z-power dicts of H-vectors."""
    out = 0.0 + 0.0j
    for m, vec in psi1.items():
        w = psi2.get(-1 - m)
        if w is not None:
            out += (-1.0) ** m * (vec @ eta @ w)
    return complex(out)


def _apply_matrix_series(A: MatrixSeriesZ, psi: dict) -> dict:
    """A(z) psi(z) for a positive-power matrix series (l >= 1 terms only)."""
    out: dict[int, np.ndarray] = {}
    for l in range(1, A.K + 1):
        Al = A[l]
        if not np.any(Al):
            continue
        for m, vec in psi.items():
            key = m + l
            cur = out.get(key)
            val = Al @ vec
            out[key] = val if cur is None else cur + val
    return out


def _basis_q(k: int, a: int, N: int) -> dict:
    v = np.zeros(N)
    v[a] = 1.0
    return {k: v}


def _basis_p(j: int, b: int, eta_inv: np.ndarray) -> dict:
    # v^b (-z)^{-j-1} = (-1)^{j+1} (eta^{-1} row b) z^{-j-1}
    return {-j - 1: ((-1.0) ** (j + 1)) * eta_inv[b]}


def quadratic_hamiltonian_terms(model: AnModel, A: MatrixSeriesZ, z_window: int):
    """Monomial table of h_A(phi) = Omega(A phi, phi) / 2.

    Returns (qp_terms, pp_terms):
      qp_terms[(j, b, k, a)] = c  for the monomial  c * p_{j,b} q_k^a
      pp_terms[(j, b, j2, b2)] = c  for  c * p_{j,b} p_{j2,b2}  (unordered key)
    A positive-z-power A admits no qq monomials; asserted to machine zero.
    """
    N = model.N
    eta, eta_inv = model.eta, model.eta_inv
    qs = [(k, a) for k in range(z_window + 1) for a in range(N)]
    ps = [(j, b) for j in range(z_window + A.K + 1) for b in range(N)]
    basis = {}
    for k, a in qs:
        basis[("q", k, a)] = _basis_q(k, a, N)
    for j, b in ps:
        basis[("p", j, b)] = _basis_p(j, b, eta_inv)
    Ab = {key: _apply_matrix_series(A, vec) for key, vec in basis.items()}

    def B(x, y) -> complex:
        return omega_pairing(Ab[x], basis[y], eta)

    qp: dict[tuple, complex] = {}
    pp: dict[tuple, complex] = {}
    # q-q monomials must vanish
    for k, a in qs:
        x = ("q", k, a)
        for k2, a2 in qs:
            if abs(B(x, ("q", k2, a2))) > 1e-12:
                raise ArithmeticError("unexpected qq term in the Hamiltonian")
    for j, b in ps:
        x = ("p", j, b)
        for k, a in qs:
            y = ("q", k, a)
            c = 0.5 * (B(x, y) + B(y, x))
            if c != 0:
                qp[(j, b, k, a)] = qp.get((j, b, k, a), 0.0) + c
        for j2, b2 in ps:
            if (j2, b2) < (j, b):
                continue
            y = ("p", j2, b2)
            if (j2, b2) == (j, b):
                c = 0.5 * B(x, x)
            else:
                c = 0.5 * (B(x, y) + B(y, x))
            if c != 0:
                pp[(j, b, j2, b2)] = pp.get((j, b, j2, b2), 0.0) + c
    return qp, pp


def apply_quantized_hamiltonian(
    poly: FockPolynomial, qp: dict, pp: dict, dilaton_var: Var
) -> FockPolynomial:
    """One application of the quantized h_A.

    Rules: (p_{j,b} q_k^a)-hat = q_k^a d/dq_j^b (no hbar),
           (p p)-hat = hbar d2/dq dq.
    In the dilaton-shifted variables the multiplication by q_1^N is
    multiplication by (t_1^N - 1).
    """
    qp_by: dict[Var, list] = {}
    for (j, b, k, a), c in qp.items():
        qp_by.setdefault((j, b), []).append(((k, a), c))
    pp_by: dict[Var, list] = {}
    for (j1, b1, j2, b2), c in pp.items():
        pp_by.setdefault((j1, b1), []).append(((j2, b2), c))

    out = poly.clone_empty()
    for mono, hs in poly.data.items():
        if not mono:
            continue
        for var in set(mono):
            cnt = mono.count(var)
            reduced = list(mono)
            reduced.remove(var)
            reduced = tuple(reduced)
            for (k, a), c in qp_by.get(var, ()):
                new = tuple(sorted(reduced + ((k, a),)))
                for h, cc in hs.items():
                    out.add_term(new, h, c * cnt * cc)
                if (k, a) == dilaton_var:
                    for h, cc in hs.items():
                        out.add_term(reduced, h, -c * cnt * cc)
            for var2, c in pp_by.get(var, ()):
                cnt2 = reduced.count(var2)
                if cnt2 == 0:
                    continue
                red2 = list(reduced)
                red2.remove(var2)
                red2 = tuple(red2)
                for h, cc in hs.items():
                    out.add_term(red2, h + 1, c * cnt * cnt2 * cc)
    return out


def _exp_operator(state: FockPolynomial, qp: dict, pp: dict, dilaton_var: Var) -> FockPolynomial:
    out = state.copy()
    term = state
    j = 0
    while True:
        j += 1
        term = apply_quantized_hamiltonian(term, qp, pp, dilaton_var)
        for mono, hs in term.data.items():
            for h in list(hs):
                hs[h] /= j
        if term.is_zero() or j > 400:
            break
        out.iadd(term)
    return out


# ----------------------------------------------------------------------
# the product of one-point tau functions and the oracle driver
# ----------------------------------------------------------------------


def dpt_log_factor(
    model: AnModel, i: int, chi_max: int, max_zweight: int
) -> FockPolynomial:
    """log D_pt(hbar Delta_i; iq(z)) as a polynomial in the t variables.

    iq(z) = sum du_i/dtau_a q_k^a z^k sits at its own dilaton point, so in
    the shifted variables the factor is the generating series of
    intersection numbers in it_k = sum_a du_i/dtau_a t_k^a.
    """
    out = FockPolynomial(chi_max, max_zweight)
    du = model.du_dtau[i]  # du_i/dtau_a
    delta = complex(model.Delta[i])
    N = model.N
    # admission for a single stable block reduces to g + n - 1 <= 2 chi_max
    for g in range(0, 2 * chi_max + 1):
        for n in range(1, 2 * chi_max + 2 - g):
            if 2 * g - 2 + n <= 0:
                continue
            dim = 3 * g - 3 + n
            if dim < 0 or dim > max_zweight:
                continue
            # multisets of psi powers with sum = dim
            for ks in _partitions_n(dim, n):
                val = witten_correlator(g, ks)
                if val == 0:
                    continue
                mult = 1.0
                seen: dict[int, int] = {}
                for k in ks:
                    seen[k] = seen.get(k, 0) + 1
                    mult *= seen[k]
                base = val * delta ** (g - 1) / mult
                for assign in iproduct(range(N), repeat=n):
                    w = base
                    for a in assign:
                        w *= du[a]
                    if w == 0:
                        continue
                    mono = tuple(sorted((ks[r], assign[r]) for r in range(n)))
                    out.add_term(mono, g - 1, w)
    return out


def _partitions_n(total: int, n: int):
    """Weakly decreasing n-tuples of nonnegative ints summing to total."""

    def rec(rem, slots, cap):
        if slots == 0:
            if rem == 0:
                yield ()
            return
        for first in range(min(rem, cap), -1, -1):
            for rest in rec(rem - first, slots - 1, first):
                yield (first,) + rest

    yield from rec(total, n, total)


def _quantization_pass(model, frame, rmatrix, chi_max: int) -> dict:
    N = model.N
    max_zweight = 6 * chi_max + 6
    logsum = FockPolynomial(chi_max, max_zweight)
    for i in range(N):
        logsum.iadd(dpt_log_factor(model, i, chi_max, max_zweight))
    state = logsum.exp()

    calR = rmatrix.R.conjugate_by(frame.Psi, frame.PsiInv)
    A = calR.log()
    qp, pp = quadratic_hamiltonian_terms(model, A, max_zweight)
    dilaton_var: Var = (1, N - 1)
    full = _exp_operator(state, qp, pp, dilaton_var)
    lg = full.log_nonconst()

    out: dict = {}
    for mono, hs in lg.data.items():
        if not mono:
            continue
        mult = 1.0
        seen: dict[Var, int] = {}
        for v in mono:
            seen[v] = seen.get(v, 0) + 1
            mult *= seen[v]
        ins = tuple(sorted((a, k) for k, a in mono))
        for h, c in hs.items():
            g = h + 1
            if g < 0 or 2 * g - 2 + len(mono) <= 0 or 2 * g - 2 + len(mono) > chi_max:
                continue
            key = (g, ins)
            out[key] = out.get(key, 0.0) + c * mult
    return out


def ancestor_via_quantization(
    model: AnModel,
    frame: CanonicalFrame,
    rmatrix: RMatrix,
    chi_max: int = 3,
) -> dict:
    """Ancestor correlators with 2g - 2 + n <= chi_max by direct quantization.

    Returns a dict {(g, ((a1,k1),...)): value}.  The overall constant of the
    quantized operator (the cocycle) is not pinned by the definition and is
    discarded with the rest of the constant term of the log.
    """
    if rmatrix.max_residual() > 1e-6:
        raise ArithmeticError("R fails unitarity; quantization would be inconsistent")
    return _quantization_pass(model, frame, rmatrix, chi_max)
