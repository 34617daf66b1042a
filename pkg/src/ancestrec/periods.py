"""Numeric periods anywhere in the lambda plane.

For a one-variable fiber {F(t, x) = lam} the periods of vanishing cycles
are linear functionals on the roots x_m(t, lam): the index-zero pairing is

    (I^(0)_c, v_a) = sum_m w_m v_a(x_m) / F'(x_m)

for a zero-sum weight vector w over the cluster sheets, and every other
index follows from the algebraic ladder

    I^(k+1) = (lam - E*)^{-1} (theta - k - 1/2) I^(k),

which is the lambda-connection solved for the derivative.  Roots are
continued along paths by predictor-corrector tracking, which also realizes
monodromy.  An explicit ODE integrator for the same connection is provided
as an independent route (and for the spec'd continuation surface); both
work at caustic points, where the Puiseux seeds do not exist.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .frobenius import AnModel

__all__ = ["RootTracker", "shift_up", "shift_down", "period_matrix", "PeriodEvaluator", "ode_period"]


class RootTracker:
    """Predictor-corrector continuation of the fiber roots along paths."""

    def __init__(self, model: AnModel, lam0: complex, roots0: np.ndarray | None = None):
        self.model = model
        self.lam = complex(lam0)
        if roots0 is None:
            c = model.F.coeffs.copy()
            c[0] -= lam0
            r = np.polynomial.polynomial.polyroots(c)
            order = np.lexsort((r.imag.round(10), r.real.round(10)))
            self.roots = r[order]
        else:
            self.roots = np.array(roots0, dtype=complex)

    def copy(self) -> "RootTracker":
        t = RootTracker.__new__(RootTracker)
        t.model = self.model
        t.lam = self.lam
        t.roots = self.roots.copy()
        return t

    def _min_gap(self) -> float:
        r = self.roots
        n = r.size
        g = np.inf
        for i in range(n):
            for j in range(i + 1, n):
                g = min(g, abs(r[i] - r[j]))
        return g

    def _newton(self, lam: complex, guesses: np.ndarray, steps: int = 12) -> np.ndarray:
        x = guesses.copy()
        for _ in range(steps):
            f = self.model.F(x) - lam
            df = self.model.dF(x)
            dx = f / df
            x = x - dx
            if np.max(np.abs(dx)) < 1e-14 * (1 + np.max(np.abs(x))):
                break
        return x

    def step_to(self, lam1: complex) -> np.ndarray:
        """Advance every root to lam1, bisecting the step while identities blur."""
        stack = [complex(lam1)]
        while stack:
            target = stack[-1]
            dlam = target - self.lam
            pred = self.roots + dlam / self.model.dF(self.roots)
            new = self._newton(target, pred)
            # reject if two tracked roots collapsed onto one another
            ok = True
            n = new.size
            for i in range(n):
                for j in range(i + 1, n):
                    if abs(new[i] - new[j]) < 0.25 * abs(pred[i] - pred[j]) - 1e-300:
                        ok = False
            move = np.max(np.abs(new - self.roots))
            gap = self._min_gap()
            if ok and (move < 0.5 * gap + 1e-300):
                self.lam = target
                self.roots = new
                stack.pop()
            else:
                if abs(dlam) < 1e-13 * (1 + abs(target)):
                    raise ArithmeticError(
                        f"root tracking stalled near lam={target:.6g} (branch point?)"
                    )
                stack.append(self.lam + dlam / 2)
        return self.roots

    def walk(self, path) -> np.ndarray:
        for lam in path:
            self.step_to(lam)
        return self.roots


def shift_up(model: AnModel, lam: complex, k: int, vec: np.ndarray) -> np.ndarray:
    """I^(k) -> I^(k+1) on flat-frame (upper) components."""
    M = lam * np.eye(model.N) - model.euler_mult
    theta = np.diag(model.theta_diag())
    return np.linalg.solve(M, (theta - (k + 0.5) * np.eye(model.N)) @ vec)


def shift_down(model: AnModel, lam: complex, k: int, vec: np.ndarray) -> np.ndarray:
    """I^(k+1) -> I^(k)."""
    M = lam * np.eye(model.N) - model.euler_mult
    theta = np.diag(model.theta_diag())
    return np.linalg.solve(theta - (k + 0.5) * np.eye(model.N), M @ vec)


def period_matrix(model: AnModel, lam: complex, roots: np.ndarray, kmin: int, kmax: int) -> dict:
    """Upper components of the sheet functionals for k in [kmin, kmax].

    Returns {k: array[sheet, component]}.  Only zero-sum weight combinations
    of sheets are honest cycle periods; the ladder is linear, so shifting
    sheet by sheet and combining afterwards is exact for those.
    """
    n1 = roots.size
    pair0 = np.zeros((n1, model.N), dtype=complex)
    dfx = model.dF(roots)
    for a in range(model.N):
        pair0[:, a] = model.v_polys[a](roots) / dfx
    up0 = pair0 @ model.eta_inv.T  # raise the pairing index
    out = {0: up0}
    cur = up0
    for k in range(0, kmax):
        cur = np.stack([shift_up(model, lam, k, cur[m]) for m in range(n1)])
        out[k + 1] = cur
    cur = up0
    for k in range(-1, kmin - 1, -1):
        cur = np.stack([shift_down(model, lam, k, cur[m]) for m in range(n1)])
        out[k] = cur
    return out


@dataclass
class PeriodEvaluator:
    """Periods of weighted-sheet cycles at one lambda, all k in a window."""

    model: AnModel
    lam: complex
    table: dict  # k -> array[sheet, component] (upper components)

    @classmethod
    def at(cls, model: AnModel, tracker: RootTracker, kmin: int, kmax: int):
        return cls(model, tracker.lam, period_matrix(model, tracker.lam, tracker.roots, kmin, kmax))

    def upper(self, weights: np.ndarray, k: int) -> np.ndarray:
        """Flat-frame components of I^(k) for the cycle sum_m w_m [sheet m]."""
        return weights @ self.table[k]

    def pairing(self, weights: np.ndarray, k: int, a: int) -> complex:
        vec = self.upper(weights, k)
        return complex(vec @ self.model.eta[:, a])


def ode_period(
    model: AnModel,
    seed_lam: complex,
    seed_vec: np.ndarray,
    k: int,
    path,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> np.ndarray:
    """Continue the upper components of I^(k) along a path by integrating
    the lambda-connection (lam - E*) dI/dlam = (theta - k - 1/2) I.

    ``path`` is a sequence of waypoints; integration is piecewise linear in
    the parameter.  The seed is typically a truncated local expansion near
    a branch point (semisimple) or a root-tracking value (anywhere).
    """
    N = model.N
    theta = np.diag(model.theta_diag())
    ME = model.euler_mult
    pts = [complex(seed_lam)] + [complex(p) for p in path]

    def rhs(s, y, lam_a, dlam):
        lam = lam_a + s * dlam
        vec = y[:N] + 1j * y[N:]
        dvec = np.linalg.solve(
            lam * np.eye(N) - ME, (theta - (k + 0.5) * np.eye(N)) @ vec
        ) * dlam
        return np.concatenate([dvec.real, dvec.imag])

    vec = np.asarray(seed_vec, dtype=complex)
    for a, b in zip(pts[:-1], pts[1:]):
        y0 = np.concatenate([vec.real, vec.imag])
        sol = solve_ivp(
            rhs, (0.0, 1.0), y0, method="DOP853", rtol=rtol, atol=atol, args=(a, b - a)
        )
        if not sol.success:
            raise ArithmeticError(f"period ODE failed on segment {a:.4g} -> {b:.4g}")
        y = sol.y[:, -1]
        vec = y[:N] + 1j * y[N:]
    return vec
