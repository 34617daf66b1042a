"""Exact-shape truncated series arithmetic.

Puiseux series in the local double-cover variable s = (lam - u)**(1/2),
matrix-valued power series in z, and complex polynomial helpers.  Everything
downstream (period expansions, propagators, the residue recursion) is built
on these three types.

Conventions
-----------
* Puiseux exponents are stored as integers in the s-variable, so a term of
  lambda-degree e/2 sits at integer key e.  Half-integer floating exponents
  never appear.
* ``trunc_order`` means "coefficients with exponent > trunc_order are
  unknown", not zero.  ``trunc_order = None`` marks an exact (closed-form)
  series.  Binary operations propagate the tightest valid truncation.
* Coefficients are double-precision complex.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Mapping

import numpy as np

__all__ = [
    "PuiseuxSeries",
    "MatrixSeriesZ",
    "ComplexPolynomial",
    "puiseux_arith",
    "puiseux_residue",
    "poly_roots",
    "BasePointMismatchError",
    "ZeroDivisionSeriesError",
    "TruncationError",
]

_COEFF_TOL = 1e-300  # keep exact zeros out of the table


class BasePointMismatchError(ValueError):
    """Arithmetic between Puiseux series centered at different points."""


class ZeroDivisionSeriesError(ZeroDivisionError):
    """Inversion of a series whose lowest coefficient vanishes."""


class TruncationError(RuntimeError):
    """A requested coefficient lies beyond the known truncation order."""


def _min_trunc(a: int | None, b: int | None) -> int | None:
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


class PuiseuxSeries:
    """Truncated Puiseux series sum_e c_e * s**e with s = (lam - u)**(1/2).

    Immutable after construction; safe to share between threads.
    """

    __slots__ = ("base_point", "coeffs", "trunc_order")

    def __init__(
        self,
        base_point: complex,
        coeffs: Mapping[int, complex],
        trunc_order: int | None = None,
    ):
        cleaned = {}
        for e, c in coeffs.items():
            e = int(e)
            if trunc_order is not None and e > trunc_order:
                continue
            c = complex(c)
            if abs(c) > _COEFF_TOL:
                cleaned[e] = c
        self.base_point = complex(base_point)
        self.coeffs = cleaned
        self.trunc_order = trunc_order

    # -- constructors -------------------------------------------------

    @classmethod
    def constant(cls, base_point: complex, value: complex) -> "PuiseuxSeries":
        return cls(base_point, {0: value})

    @classmethod
    def monomial(cls, base_point: complex, e: int, value: complex = 1.0) -> "PuiseuxSeries":
        return cls(base_point, {e: value})

    # -- structure ----------------------------------------------------

    @property
    def valuation(self) -> int | None:
        """Lowest exponent present, or None for the zero series."""
        if not self.coeffs:
            return None
        return min(self.coeffs)

    def coeff(self, e: int, strict: bool = False) -> complex:
        if strict and self.trunc_order is not None and e > self.trunc_order:
            raise TruncationError(
                f"coefficient s^{e} beyond truncation order {self.trunc_order}"
            )
        return self.coeffs.get(e, 0.0 + 0.0j)

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(c) <= tol for c in self.coeffs.values())

    def norm(self) -> float:
        return max((abs(c) for c in self.coeffs.values()), default=0.0)

    def _check_base(self, other: "PuiseuxSeries") -> None:
        if self.base_point != other.base_point:
            raise BasePointMismatchError(
                f"base points differ: {self.base_point} vs {other.base_point}"
            )

    # -- ring operations ----------------------------------------------

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = PuiseuxSeries.constant(self.base_point, other)
        self._check_base(other)
        trunc = _min_trunc(self.trunc_order, other.trunc_order)
        coeffs = dict(self.coeffs)
        for e, c in other.coeffs.items():
            coeffs[e] = coeffs.get(e, 0.0) + c
        return PuiseuxSeries(self.base_point, coeffs, trunc)

    __radd__ = __add__

    def __neg__(self):
        return PuiseuxSeries(
            self.base_point, {e: -c for e, c in self.coeffs.items()}, self.trunc_order
        )

    def __sub__(self, other):
        if isinstance(other, (int, float, complex)):
            other = PuiseuxSeries.constant(self.base_point, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, complex)):
            return PuiseuxSeries(
                self.base_point,
                {e: c * other for e, c in self.coeffs.items()},
                self.trunc_order,
            )
        self._check_base(other)
        va, vb = self.valuation, other.valuation
        if va is None or vb is None:
            # zero series; truncation shifted by the partner's valuation is moot
            trunc = _min_trunc(self.trunc_order, other.trunc_order)
            return PuiseuxSeries(self.base_point, {}, trunc)
        ta = None if self.trunc_order is None else self.trunc_order + vb
        tb = None if other.trunc_order is None else other.trunc_order + va
        trunc = _min_trunc(ta, tb)
        coeffs: dict[int, complex] = {}
        for ea, ca in self.coeffs.items():
            for eb, cb in other.coeffs.items():
                e = ea + eb
                if trunc is not None and e > trunc:
                    continue
                coeffs[e] = coeffs.get(e, 0.0) + ca * cb
        return PuiseuxSeries(self.base_point, coeffs, trunc)

    __rmul__ = __mul__

    def invert(self) -> "PuiseuxSeries":
        """Multiplicative inverse; requires a nonzero lowest coefficient."""
        v = self.valuation
        if v is None:
            raise ZeroDivisionSeriesError("cannot invert the zero series")
        c0 = self.coeffs[v]
        # relative order of known coefficients
        if self.trunc_order is None:
            rel = max(self.coeffs) - v
        else:
            rel = self.trunc_order - v
        # self = c0 s^v (1 + h); invert the unit geometric-series style
        h = {e - v: c / c0 for e, c in self.coeffs.items() if e != v}
        inv_unit = {0: 1.0 + 0.0j}
        # Newton-free: accumulate powers of (-h) up to relative order
        power = {0: 1.0 + 0.0j}
        max_pow = rel if h else 0
        min_h = min(h) if h else 1
        n_iter = math.ceil(max_pow / max(min_h, 1)) if h else 0
        for _ in range(n_iter):
            new: dict[int, complex] = {}
            for ep, cp in power.items():
                for eh, ch in h.items():
                    e = ep + eh
                    if e > rel:
                        continue
                    new[e] = new.get(e, 0.0) - cp * ch
            power = new
            if not power:
                break
            for e, c in power.items():
                inv_unit[e] = inv_unit.get(e, 0.0) + c
        # an exact monomial inverts exactly; anything else stays truncated
        trunc = None if (self.trunc_order is None and not h) else rel - v
        coeffs = {e - v: c / c0 for e, c in inv_unit.items()}
        return PuiseuxSeries(self.base_point, coeffs, trunc)

    def __truediv__(self, other):
        if isinstance(other, (int, float, complex)):
            return self * (1.0 / other)
        return self * other.invert()

    # -- calculus -----------------------------------------------------

    def differentiate(self) -> "PuiseuxSeries":
        """d/d(lam): lowers the s-exponent by 2 and multiplies by e/2."""
        coeffs = {e - 2: c * (e / 2.0) for e, c in self.coeffs.items() if e != 0}
        trunc = None if self.trunc_order is None else self.trunc_order - 2
        return PuiseuxSeries(self.base_point, coeffs, trunc)

    def antiderivative(self) -> "PuiseuxSeries":
        """Inverse of :meth:`differentiate`; rejects an s^{-2} term."""
        if abs(self.coeffs.get(-2, 0.0)) > 0:
            raise ValueError("antiderivative of s^-2 is not a Puiseux series")
        coeffs = {e + 2: c / ((e + 2) / 2.0) for e, c in self.coeffs.items()}
        trunc = None if self.trunc_order is None else self.trunc_order + 2
        return PuiseuxSeries(self.base_point, coeffs, trunc)

    def truncate(self, order: int) -> "PuiseuxSeries":
        trunc = order if self.trunc_order is None else min(order, self.trunc_order)
        return PuiseuxSeries(self.base_point, self.coeffs, trunc)

    def evaluate(self, lam: complex, branch: int = 0) -> complex:
        """Numeric value at lam using s = principal sqrt(lam - u), times (-1)^branch."""
        s = np.sqrt(complex(lam) - self.base_point) * (-1) ** branch
        return sum(c * s**e for e, c in self.coeffs.items())

    def __repr__(self):
        terms = ", ".join(f"{e}: {c:.6g}" for e, c in sorted(self.coeffs.items()))
        return f"PuiseuxSeries(u={self.base_point:.6g}, {{{terms}}}, trunc={self.trunc_order})"


def puiseux_arith(a: PuiseuxSeries, b: PuiseuxSeries | None, op: str) -> PuiseuxSeries:
    """Dispatcher over the four basic Puiseux operations.

    ``op`` is one of ``add``, ``mul``, ``invert-a``, ``differentiate-a``;
    the last two ignore ``b``.
    """
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    if op == "invert-a":
        return a.invert()
    if op == "differentiate-a":
        return a.differentiate()
    raise ValueError(f"unknown op {op!r}")


def puiseux_residue(g: PuiseuxSeries, odd_tol: float | None = None) -> complex:
    """Residue at the base point of the 1-form g(lam) d(lam).

    With lam = u + s**2 the residue is the coefficient of s^{-2}.  Odd
    exponents never contribute (they cancel between the two branches of the
    double cover).  Passing ``odd_tol`` turns on a diagnostic: branch-even
    integrands are the only valid inputs to the recursion, so a sizable odd
    coefficient in the principal part signals a branch-summation bug
    upstream.
    """
    if odd_tol is not None:
        scale = g.norm() or 1.0
        for e, c in g.coeffs.items():
            if e <= -2 and e % 2 != 0 and abs(c) > odd_tol * scale:
                raise ValueError(
                    f"odd principal exponent s^{e} with coefficient {c:.3g}: "
                    "integrand is not branch-even"
                )
    if g.trunc_order is not None and g.trunc_order < -2:
        raise TruncationError("series truncated above the residue coefficient")
    return g.coeff(-2)


# ----------------------------------------------------------------------
# matrix-valued power series in z
# ----------------------------------------------------------------------


class MatrixSeriesZ:
    """Truncated power series M_0 + M_1 z + ... + M_K z^K of square matrices."""

    __slots__ = ("coeffs", "K", "N")

    def __init__(self, coeffs: Iterable[np.ndarray]):
        mats = [np.array(m, dtype=complex) for m in coeffs]
        if not mats:
            raise ValueError("need at least the constant coefficient")
        N = mats[0].shape[0]
        for m in mats:
            if m.shape != (N, N):
                raise ValueError("all coefficients must be square of equal size")
            m.setflags(write=False)
        self.coeffs = tuple(mats)
        self.K = len(mats) - 1
        self.N = N

    @classmethod
    def identity(cls, N: int, K: int) -> "MatrixSeriesZ":
        return cls([np.eye(N)] + [np.zeros((N, N)) for _ in range(K)])

    def __getitem__(self, k: int) -> np.ndarray:
        return self.coeffs[k]

    def __add__(self, other: "MatrixSeriesZ") -> "MatrixSeriesZ":
        K = min(self.K, other.K)
        return MatrixSeriesZ([self.coeffs[k] + other.coeffs[k] for k in range(K + 1)])

    def __sub__(self, other: "MatrixSeriesZ") -> "MatrixSeriesZ":
        K = min(self.K, other.K)
        return MatrixSeriesZ([self.coeffs[k] - other.coeffs[k] for k in range(K + 1)])

    def __mul__(self, other: "MatrixSeriesZ") -> "MatrixSeriesZ":
        K = min(self.K, other.K)
        out = []
        for k in range(K + 1):
            acc = np.zeros((self.N, self.N), dtype=complex)
            for a in range(k + 1):
                acc += self.coeffs[a] @ other.coeffs[k - a]
            out.append(acc)
        return MatrixSeriesZ(out)

    def transpose(self) -> "MatrixSeriesZ":
        return MatrixSeriesZ([m.T for m in self.coeffs])

    def negate_z(self) -> "MatrixSeriesZ":
        """M(-z)."""
        return MatrixSeriesZ([m * (-1) ** k for k, m in enumerate(self.coeffs)])

    def conjugate_by(self, P: np.ndarray, Pinv: np.ndarray) -> "MatrixSeriesZ":
        return MatrixSeriesZ([P @ m @ Pinv for m in self.coeffs])

    def log(self) -> "MatrixSeriesZ":
        """log of a series with unit constant term, as a z-truncated series."""
        if not np.allclose(self.coeffs[0], np.eye(self.N), atol=1e-12):
            raise ValueError("log requires constant term I")
        X = MatrixSeriesZ([self.coeffs[0] - np.eye(self.N)] + list(self.coeffs[1:]))
        out = [np.zeros((self.N, self.N), dtype=complex) for _ in range(self.K + 1)]
        power = MatrixSeriesZ.identity(self.N, self.K)
        for j in range(1, self.K + 1):
            power = power * X
            sign = (-1) ** (j + 1) / j
            for k in range(self.K + 1):
                out[k] = out[k] + sign * power.coeffs[k]
        return MatrixSeriesZ(out)

    def __repr__(self):
        return f"MatrixSeriesZ(N={self.N}, K={self.K})"


# ----------------------------------------------------------------------
# complex polynomials
# ----------------------------------------------------------------------


class ComplexPolynomial:
    """Dense complex polynomial, ascending coefficients, trimmed leading zeros."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable[complex], tol: float = 0.0):
        c = np.atleast_1d(np.array(list(coeffs), dtype=complex))
        k = c.size - 1
        while k > 0 and abs(c[k]) <= tol:
            k -= 1
        self.coeffs = c[: k + 1].copy()
        self.coeffs.setflags(write=False)

    @property
    def degree(self) -> int:
        if self.coeffs.size == 1 and self.coeffs[0] == 0:
            return -1  # zero polynomial
        return self.coeffs.size - 1

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, self.coeffs)

    def derivative(self, m: int = 1) -> "ComplexPolynomial":
        return ComplexPolynomial(np.polynomial.polynomial.polyder(self.coeffs, m))

    def shift(self, x0: complex) -> np.ndarray:
        """Coefficients of p(x0 + y) in y (Taylor data at x0)."""
        c = self.coeffs
        n = c.size
        out = np.zeros(n, dtype=complex)
        fact = 1.0
        p = c
        for m in range(n):
            out[m] = np.polynomial.polynomial.polyval(x0, p) / fact
            p = np.polynomial.polynomial.polyder(p)
            fact *= m + 1
            if p.size == 0:
                break
        return out

    def __mul__(self, other: "ComplexPolynomial") -> "ComplexPolynomial":
        return ComplexPolynomial(
            np.polynomial.polynomial.polymul(self.coeffs, other.coeffs)
        )

    def __repr__(self):
        return f"ComplexPolynomial(deg={self.degree})"


def poly_roots(
    p: ComplexPolynomial | np.ndarray,
    tol: float = 1e-10,
    merge_threshold: float = 1e-6,
) -> tuple[np.ndarray, bool]:
    """All complex roots with multiplicity, via companion-matrix eigenvalues.

    Returns (roots, near_multiple) where near_multiple flags any pair closer
    than ``merge_threshold`` times the root scale.  Backward error of every
    root is checked against ``tol`` times the coefficient norm.
    """
    coeffs = p.coeffs if isinstance(p, ComplexPolynomial) else np.asarray(p, dtype=complex)
    if coeffs.size <= 1 or np.all(coeffs == 0):
        raise ValueError("roots of a constant or zero polynomial")
    roots = np.polynomial.polynomial.polyroots(coeffs)
    scale = 1.0 + np.max(np.abs(roots)) if roots.size else 1.0
    norm = np.max(np.abs(coeffs))
    vals = np.polynomial.polynomial.polyval(roots, coeffs)
    # backward error of a companion eigenvalue is benign unless the
    # polynomial value is large relative to the evaluation condition number
    cond = np.maximum.reduce(
        [np.abs(coeffs[k]) * np.abs(roots) ** k for k in range(coeffs.size)]
    )
    if np.any(np.abs(vals) > tol * np.maximum(norm, cond)):
        raise ArithmeticError("root refinement failed backward-error check")
    near = False
    for i in range(roots.size):
        for j in range(i + 1, roots.size):
            if abs(roots[i] - roots[j]) < merge_threshold * scale:
                near = True
    order = np.lexsort((roots.imag.round(10), roots.real.round(10)))
    return roots[order], near
