"""The local residue recursion: builds the correlator table at a semisimple point.

Correlator keys are (genus, multiset of (flat index, psi power)); values are
built in (g, n)-lexicographic order from the genus-0 three-point structure
constants and the genus-1 closed forms, everything else by the quarter-sum
of residues over the critical values.  The distinguished first slot of each
step is the first element of the sorted key; symmetry in the choice is a
property test, not an assumption.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement

import numpy as np

from .frobenius import AnModel, CanonicalFrame, CausticError
from .localdata import LocalExpansion, propagator_diag, v_matrices
from .rmatrix import RMatrix
from .series import PuiseuxSeries, puiseux_residue
from .wick import omega_coeff, slot_multiplicity_factor

__all__ = [
    "CorrelatorTable",
    "DependencyError",
    "initial_genus0_3pt",
    "initial_genus1",
    "eo_step",
    "build_table",
    "dlog_hessians",
]

BETA = "beta"  # the single cycle label of the diagonal recursion

# cancellation ratio beyond which a residue entry is flagged
CANCELLATION_LIMIT = 1e8


class DependencyError(KeyError):
    """A lexicographically earlier table entry is missing."""


def is_stable(g: int, n: int) -> bool:
    return 2 * g - 2 + n > 0


def is_tame(g: int, ins) -> bool:
    return sum(k for _, k in ins) <= 3 * g - 3 + len(ins)


class _DiagonalProvider:
    """Puiseux-valued Wick data at one critical value (cycle = beta_i)."""

    def __init__(self, loc: LocalExpansion, prop0: PuiseuxSeries):
        self.loc = loc
        self._prop0 = prop0
        self._zero = PuiseuxSeries(loc.u, {})
        self.cache: dict = {}

    def pair_minus(self, c, k: int, a: int) -> PuiseuxSeries:
        key = ("pm", k, a)
        if key not in self.cache:
            self.cache[key] = self.loc.pairing(-k, a)
        return self.cache[key]

    def upper_plus(self, c, k: int, cc: int) -> PuiseuxSeries:
        key = ("up", k, cc)
        if key not in self.cache:
            self.cache[key] = self.loc.upper(k + 1, cc) * (-1.0) ** k
        return self.cache[key]

    def prop0(self, c1, c2) -> PuiseuxSeries:
        return self._prop0

    def zero(self) -> PuiseuxSeries:
        return self._zero


@dataclass
class CorrelatorTable:
    """Symmetric ancestor-correlator values at a point t."""

    model: AnModel
    frame: CanonicalFrame
    rmatrix: RMatrix
    values: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    _locals: list = field(default_factory=list)
    _providers: list = field(default_factory=list)

    def __post_init__(self):
        if not self._locals:
            V = v_matrices(self.rmatrix.R)
            for i in range(self.model.N):
                loc = LocalExpansion(self.model, self.frame, self.rmatrix, i)
                p0 = propagator_diag(self.model, self.frame, self.rmatrix, i, 0, V=V)
                self._locals.append(loc)
                self._providers.append(_DiagonalProvider(loc, p0))

    @property
    def N(self) -> int:
        return self.model.N

    @staticmethod
    def key(g: int, ins) -> tuple:
        return (int(g), tuple(sorted((int(a), int(k)) for a, k in ins)))

    def corr(self, g: int, ins) -> complex:
        """Value of <v_{a1} psi^{k1}, ...>_g; structurally 0 out of range."""
        g, ins = self.key(g, ins)
        if not is_stable(g, len(ins)):
            return 0.0
        if not is_tame(g, ins):
            return 0.0
        try:
            return self.values[(g, ins)]
        except KeyError:
            raise DependencyError(f"missing correlator (g={g}, ins={ins})") from None

    def put(self, g: int, ins, value: complex, provenance: str) -> None:
        g, ins = self.key(g, ins)
        self.values[(g, ins)] = complex(value)
        self.provenance[(g, ins)] = provenance

    def sorted_keys(self):
        return sorted(self.values, key=lambda k: (k[0], len(k[1]), k[1]))


def initial_genus0_3pt(model: AnModel) -> dict:
    """All <v_a, v_b, v_c>_{0,3} = (v_a * v_b, v_c)."""
    out = {}
    N = model.N
    pairing = np.einsum("abc,cd->abd", model.structure, model.eta)
    for a in range(N):
        for b in range(a, N):
            for c in range(b, N):
                key = tuple(sorted([(a, 0), (b, 0), (c, 0)]))
                out[(0, key)] = complex(pairing[a, b, c])
    return out


def dlog_hessians(model: AnModel) -> np.ndarray:
    """d/d(tau_a) log Delta_k, analytically.  Returns array [a, k]."""
    n, N = model.n, model.N
    out = np.zeros((N, N), dtype=complex)
    xi = model.xi
    d2 = model.dF.derivative()  # F''
    d3 = d2.derivative()  # F'''
    for b in range(1, n + 1):  # t^b direction
        # dF'/dt^b = (n-b) x^{n-b-1}; dxi_k = -(dF'/dt^b)(xi_k)/Delta_k
        for k in range(N):
            dfp = (n - b) * xi[k] ** (n - b - 1) if n - b >= 1 else 0.0
            dxi = -dfp / model.Delta[k]
            # dF''/dt^b = (n-b)(n-b-1) x^{n-b-2}
            df2 = (
                (n - b) * (n - b - 1) * xi[k] ** (n - b - 2) if n - b >= 2 else 0.0
            )
            ddelta = df2 + d3(xi[k]) * dxi
            for a in range(N):
                out[a, k] += model.jac_t_tau[b - 1, a] * ddelta / model.Delta[k]
    return out


def initial_genus1(model: AnModel, frame: CanonicalFrame, rmatrix: RMatrix) -> dict:
    """<v_a psi>_{1,1} = Tr(v_a *)/24 and the genus-1 one-point gradient."""
    out = {}
    N = model.N
    R1 = rmatrix.R[1]
    dlog = dlog_hessians(model)
    for a in range(N):
        out[(1, ((a, 1),))] = complex(np.trace(model.mult[a]) / 24.0)
        val = 0.5 * sum(R1[i, i] * model.du_dtau[i, a] for i in range(N))
        val += np.sum(dlog[a, :]) / 48.0
        out[(1, ((a, 0),))] = complex(val)
    return out


def eo_step(
    table: CorrelatorTable,
    g: int,
    target: tuple[int, int],
    slots,
    return_parts: bool = False,
):
    """One recursion step: the residue quarter-sum for <v_a psi^m, slots>_g.

    ``target`` is the distinguished slot (a, m).  Requires every
    lexicographically earlier entry; returns the complex value, or the
    per-critical-value contributions when ``return_parts`` is set.
    """
    a, m = target
    slots = tuple(sorted(slots))
    full = tuple(sorted(slots + ((a, m),)))
    if not is_tame(g, full):
        return ([0.0] * table.N, 0.0, 0.0) if return_parts else 0.0
    mult = slot_multiplicity_factor(slots)
    parts = []
    cancel = 0.0
    for i in range(table.N):
        loc = table._locals[i]
        prov = table._providers[i]
        kernel = loc.pairing(-1 - m, a) * loc.y_density().invert()
        w = omega_coeff(prov, table, g, (BETA, BETA), slots)
        integrand = kernel * w
        res = puiseux_residue(integrand, odd_tol=1e-6)
        parts.append(res)
        if res != 0:
            cancel = max(cancel, kernel.norm() * w.norm() / abs(res))
    value = 0.25 * mult * sum(parts)
    if return_parts:
        return parts, value, cancel
    return value


def build_table(
    model: AnModel,
    frame: CanonicalFrame,
    rmatrix: RMatrix,
    g_max: int,
    n_max: int,
) -> CorrelatorTable:
    """Complete tame table for g <= g_max, n <= n_max at a semisimple point."""
    if not model.semisimple:
        raise CausticError("the residue recursion runs at semisimple points")
    table = CorrelatorTable(model=model, frame=frame, rmatrix=rmatrix)
    N = model.N
    for (gi, ins), val in initial_genus0_3pt(model).items():
        if 0 <= g_max and 3 <= n_max:
            table.put(gi, ins, val, "initial")
    if g_max >= 1 and n_max >= 1:
        for (gi, ins), val in initial_genus1(model, frame, rmatrix).items():
            table.put(gi, ins, val, "initial")
    # one genus drop in the split terms costs two extra insertions, so the
    # lower-genus levels must extend beyond n_max for the top level to close
    for g in range(0, g_max + 1):
        for n in range(1, n_max + 2 * (g_max - g) + 1):
            if not is_stable(g, n):
                continue
            if (g, n) in [(0, 3), (1, 1)]:
                continue
            budget = 3 * g - 3 + n
            alphabet = [(a, k) for a in range(N) for k in range(budget + 1)]
            for ins in combinations_with_replacement(alphabet, n):
                if sum(k for _, k in ins) > budget:
                    continue
                key = table.key(g, ins)
                first, rest = key[1][0], key[1][1:]
                _, value, cancel = eo_step(table, g, first, rest, return_parts=True)
                table.put(g, key[1], value, "recursion")
                if cancel > CANCELLATION_LIMIT:
                    table.flags[key] = cancel
    return table
