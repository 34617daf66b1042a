"""Contour machinery: cross-propagators, the extended kernel, caustic runs.

At a point where two critical values sit inside one disc (or have merged),
the residue recursion is replaced by a single contour integral whose kernel
sums over the three weight vectors of the local sheet triple.  Everything
numeric here is built from root-tracked periods:

* cycles are zero-sum weight vectors on the three cluster sheets; the
  lattice roots are sheet differences and the one-point cycles are
  sheet-minus-average, so the integrand is invariant under sheet
  relabeling and no orientation calibration is needed;
* propagator values use the line-integral definition, evaluated along a
  fixed spine to the contour basepoint plus incremental arcs, which keeps
  every node on the same analytic branch as the period tables;
* the degree-0 propagator coefficient is the mean of the full propagator
  over a small circle in the coincidence offset (the double pole averages
  out exactly), a Cauchy extraction that never meets the singular limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .frobenius import AnModel, CausticError, build_model, canonical_frame
from .periods import PeriodEvaluator, RootTracker, shift_up
from .recursion import CorrelatorTable, build_table, dlog_hessians, initial_genus0_3pt, is_stable, is_tame
from .rmatrix import compute_r
from .wick import omega_coeff, slot_multiplicity_factor

__all__ = [
    "CycleCluster",
    "Contour",
    "ContourData",
    "propagator_cross",
    "extended_integral",
    "verify_theorem2",
    "caustic_sweep",
    "QuadratureError",
]


class QuadratureError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Contour:
    center: complex
    radius: float
    nodes: int = 64
    theta0: float = np.pi / 2  # basepoint angle; keeps propagator spines clear

    def theta(self, j: int) -> float:
        return self.theta0 + 2.0 * np.pi * j / self.nodes

    def node(self, j: int) -> complex:
        return self.center + self.radius * np.exp(1j * self.theta(j))


@dataclass
class CycleCluster:
    """Sheet triple of one two-critical-value (or merged) disc.

    sheets: indices of the three fiber roots that pinch inside the disc,
    ordered so the middle sheet is shared by both vanishing pairs;
    u_pair: the one or two critical values inside.  Sheet indices refer to
    the reference root ordering at ``base_lam``; every evaluation walks a
    tracker from there so branches stay consistent.  The intersection form on
    zero-sum weight vectors is the restricted dot product, which makes the
    sheet differences the standard rank-two root lattice.
    """

    sheets: tuple[int, int, int]
    u_pair: tuple[complex, ...]
    base_lam: complex = 0j
    base_roots: tuple = ()

    def weight(self, coeffs: tuple[float, float, float], n_roots: int) -> np.ndarray:
        w = np.zeros(n_roots)
        for c, m in zip(coeffs, self.sheets):
            w[m] += c
        return w

    def chis(self, n_roots: int) -> list[np.ndarray]:
        """The three one-point cycles: sheet minus sheet-average."""
        out = []
        for r in range(3):
            coeffs = [-1.0 / 3.0] * 3
            coeffs[r] += 1.0
            out.append(self.weight(tuple(coeffs), n_roots))
        return out

    @staticmethod
    def pair_form(w1: np.ndarray, w2: np.ndarray) -> float:
        return float(np.real(np.dot(w1, w2)))


def find_cluster(
    model: AnModel, pair: tuple[int, int] | None = None, basepoint: complex | None = None
) -> CycleCluster:
    """Identify the sheet triple pinching at the two closest critical values.

    ``pair`` optionally names the two critical-value indices; the default is
    the closest pair (the merged pair at a caustic).  All sheet indices are
    relative to the root ordering of a reference tracker at ``basepoint``.
    """
    N = model.N
    u = model.u
    scale = 1.0 + float(np.max(np.abs(u)))
    if pair is None:
        best = None
        for i in range(N):
            for j in range(i + 1, N):
                d = abs(u[i] - u[j])
                if best is None or d < best[0]:
                    best = (d, (i, j))
        if best is None:
            raise CausticError("cluster needs at least two critical values")
        pair = best[1]
    i, j = pair
    if basepoint is None:
        basepoint = 0.5 * (u[i] + u[j]) + 2.0 * scale * 1j
    base = RootTracker(model, basepoint)
    caustic_pair = abs(u[i] - u[j]) < 1e-8 * scale

    def approach(uidx):
        probe = base.copy()
        others = [abs(u[k] - u[uidx]) for k in range(N) if k not in (i, j)]
        d0 = 0.25 * abs(u[i] - u[j]) if not caustic_pair else 0.1 * scale
        if others:
            d0 = min(d0 if d0 > 0 else np.inf, 0.2 * min(others))
        direction = (base.lam - u[uidx]) / abs(base.lam - u[uidx])
        probe.step_to(u[uidx] + d0 * direction)
        return probe

    if caustic_pair:
        probe = approach(i)
        dists = np.abs(probe.roots - model.xi[i])
        sheets = tuple(int(x) for x in np.argsort(dists)[:3])
        return CycleCluster(
            sheets=sheets,
            u_pair=(complex(u[i]),),
            base_lam=complex(base.lam),
            base_roots=tuple(base.roots),
        )
    found = []
    for uidx in (i, j):
        probe = approach(uidx)
        r = probe.roots
        best_pair, best_d = None, np.inf
        for p in range(r.size):
            for q in range(p + 1, r.size):
                if abs(r[p] - r[q]) < best_d:
                    best_d, best_pair = abs(r[p] - r[q]), (p, q)
        found.append(set(best_pair))
    shared = found[0] & found[1]
    if len(shared) != 1:
        raise CausticError(f"vanishing pairs {found} do not share one sheet")
    mid = shared.pop()
    a = (found[0] - {mid}).pop()
    b = (found[1] - {mid}).pop()
    return CycleCluster(
        sheets=(a, mid, b),
        u_pair=(complex(u[i]), complex(u[j])),
        base_lam=complex(base.lam),
        base_roots=tuple(base.roots),
    )


def cluster_tracker(model: AnModel, cluster: CycleCluster) -> RootTracker:
    """Reference tracker realizing the cluster's sheet labels."""
    if cluster.base_roots:
        return RootTracker(model, cluster.base_lam, roots0=np.array(cluster.base_roots))
    return RootTracker(model, cluster.base_lam)


def rebase_cluster(model: AnModel, cluster: CycleCluster, new_lam: complex) -> CycleCluster:
    """Transport the sheet labels to a fresh reference point."""
    walked = cluster_tracker(model, cluster)
    walked.step_to(new_lam)
    fresh = RootTracker(model, new_lam)
    perm = [int(np.argmin(np.abs(fresh.roots - x))) for x in walked.roots]
    if len(set(perm)) != len(perm):
        raise ArithmeticError("sheet relabeling is ambiguous at the new basepoint")
    return CycleCluster(
        sheets=tuple(perm[s] for s in cluster.sheets),
        u_pair=cluster.u_pair,
        base_lam=complex(new_lam),
        base_roots=tuple(fresh.roots),
    )


# ----------------------------------------------------------------------
# quadrature helpers
# ----------------------------------------------------------------------


def _gl_panels(a: float, b: float, n_panels: int, pts: int, refine_to: float, outer: int = 3):
    """Gauss-Legendre nodes/weights on [a, b]: ``outer`` uniform panels over
    the outer half plus panels geometrically refined toward a down to width
    ``refine_to``."""
    xs, ws = np.polynomial.legendre.leggauss(pts)
    mid_cut = a + 0.5 * (b - a)
    cuts = [b - (b - mid_cut) * k / outer for k in range(outer + 1)]  # b .. mid
    w = mid_cut - a
    while w > refine_to and len(cuts) < n_panels + outer:
        w *= 0.3
        cuts.append(a + w)
    cuts.append(a)
    cuts = cuts[::-1]
    nodes, weights = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        nodes.extend(mid + half * xs)
        weights.extend(half * ws)
    return np.array(nodes), np.array(weights)


def _feature_panels(L: float, features, pts: int, base_panels: int = 3):
    """Panels on [0, L] refined around interior feature positions.

    ``features`` is a list of (position, scale); each gets a halo of panels
    at its own scale.  Used for integrands with poles near the path.
    """
    cuts = {0.0, L}
    for k in range(1, base_panels):
        cuts.add(L * k / base_panels)
    for pos, scale in features:
        if not (0.0 < pos < L):
            continue
        for f in (-3.0, -1.0, 1.0, 3.0):
            x = pos + f * scale
            if 0.0 < x < L:
                cuts.add(x)
    cuts = sorted(cuts)
    xs, ws = np.polynomial.legendre.leggauss(pts)
    nodes, weights = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        nodes.extend(mid + half * xs)
        weights.extend(half * ws)
    return np.array(nodes), np.array(weights)


def _pair_i2_i0(model, tra, trb, w_a, w_b) -> complex:
    """(I^(2)_a at tra's point, I^(0)_b at trb's point)."""
    pe_b = PeriodEvaluator.at(model, trb, 0, 0)
    i0b = pe_b.upper(w_b, 0)
    pe_a = PeriodEvaluator.at(model, tra, 0, 0)
    vec = pe_a.upper(w_a, 0)
    vec = shift_up(model, tra.lam, 0, vec)
    vec = shift_up(model, tra.lam, 1, vec)
    return complex(vec @ model.eta @ i0b)


def _segment_panels(L: float, pts: int, refine0: float, features):
    """Panel decomposition of [0, L]: geometric refinement toward 0, a few
    uniform interior cuts, and halos around feature positions."""
    cuts = {0.0, L, 0.25 * L, 0.5 * L, 0.75 * L}
    w = 0.5 * L
    while w > refine0 and len(cuts) < 48:
        cuts.add(w)
        w *= 0.3
    for pos, scale in features:
        for f in (-3.0, -1.0, 1.0, 3.0):
            x = pos + f * scale
            if 0.0 < x < L:
                cuts.add(x)
    cuts = sorted(cuts)
    xs, ws = np.polynomial.legendre.leggauss(pts)
    nodes, weights = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        nodes.extend(mid + half * xs)
        weights.extend(half * ws)
    return np.array(nodes), np.array(weights)


def _pinch_integral(
    model: AnModel,
    w_a: np.ndarray,
    w_b: np.ndarray,
    u_b: complex,
    nu: complex,
    end: complex,
    tracker_at_end: RootTracker,
    pts: int = 12,
    singular_pts=(),
    cube_endpoint: bool = False,
) -> complex:
    """integral over a path from u_b to ``end`` of (I^(2)_a(s+nu), I^(0)_b(s)) ds.

    The path leaves u_b along the direction of nu with a quadratic (cubic at
    a merged endpoint) parametrization out to |s - u_b| = 2|nu|, which keeps
    the shifted singularity s = u_b - nu behind the start, then runs
    straight to ``end`` with panels refined at the entry scale and around
    the projections of any listed singular points (critical values, whose
    shifted copies sit at distance |nu| at most off the true positions).
    Trackers march from the ``end`` side inward so branches stay glued to
    the caller's frame.
    """
    p = 3 if cube_endpoint else 2
    entry = 2.0 * abs(nu)
    if singular_pts:
        gap_local = min(abs(z - u_b) for z in singular_pts)
        entry = min(entry, 0.35 * max(gap_local - abs(nu), 0.2 * gap_local))
    s1 = u_b + entry * nu / abs(nu) if abs(nu) > 0 else u_b
    L = abs(end - s1)
    direction = (end - s1) / L
    feats = []
    for up in singular_pts:
        for z in (up, up - nu):
            t = float(np.real(np.conj(direction) * (z - s1)))
            d = abs(s1 + t * direction - z)
            if 0.0 < t < L:
                feats.append((t, max(d, 0.5 * abs(nu), 1e-6 * L)))
    refine = max(abs(nu), 1e-5 * L)
    nodes1, weights1 = _segment_panels(L, pts, refine, feats)
    tra = tracker_at_end.copy()
    tra.step_to(tracker_at_end.lam + nu)
    trb = tracker_at_end.copy()
    total = 0.0 + 0.0j
    for idx in np.argsort(-nodes1):
        s = s1 + nodes1[idx] * direction
        trb.step_to(s)
        tra.step_to(s + nu)
        total += weights1[idx] * _pair_i2_i0(model, tra, trb, w_a, w_b) * direction
    if abs(nu) > 0:
        ec = entry * nu / abs(nu)
        xs, ws = np.polynomial.legendre.leggauss(max(pts, 14))
        taus = 0.5 + 0.5 * xs
        tws = 0.5 * ws
        for tau, tw in sorted(zip(taus, tws), key=lambda z: -z[0]):
            s = u_b + ec * tau**p
            trb.step_to(s)
            tra.step_to(s + nu)
            ds = ec * p * tau ** (p - 1)
            total += tw * _pair_i2_i0(model, tra, trb, w_a, w_b) * ds
    return total


def propagator_cross(
    model: AnModel,
    cluster: CycleCluster,
    alpha_coeffs,
    beta_coeffs,
    lam: complex,
    mu: complex,
    beta_vanishes_at: complex | None = None,
    pts: int = 14,
) -> complex:
    """P_{alpha,beta}(t, lam; mu - lam) by the line-integral definition.

    ``alpha_coeffs``/``beta_coeffs`` are weight coefficients on the cluster
    sheet triple (e.g. (1, -1, 0) for the first sheet difference).  The
    second argument's branch point fixes the integration endpoint; for
    weight vectors supported on a sheet pair it is inferred, otherwise it
    must be supplied.  The path runs straight from the endpoint to lam (up
    to a short coincidence-aligned entry), so the branch is the one carried
    by continuation from the cluster reference point through lam.
    """
    nroots = model.n + 1
    w_a = cluster.weight(tuple(alpha_coeffs), nroots)
    w_b = cluster.weight(tuple(beta_coeffs), nroots)
    u_b = beta_vanishes_at
    if u_b is None:
        u_b = _vanishing_point(model, cluster, beta_coeffs)
    nu = mu - lam
    tr = cluster_tracker(model, cluster)
    tr.step_to(lam)
    pe = PeriodEvaluator.at(model, tr, 0, 1)
    tr_mu = tr.copy()
    tr_mu.step_to(mu)
    pe_mu = PeriodEvaluator.at(model, tr_mu, 0, 1)
    boundary = -complex(pe_mu.upper(w_a, 1) @ model.eta @ pe.upper(w_b, 0))
    singular = [u for u in model.u if abs(u - u_b) > 1e-12]
    integral = _pinch_integral(
        model,
        w_a,
        w_b,
        u_b,
        nu,
        lam,
        tr,
        pts=pts,
        singular_pts=singular,
        cube_endpoint=len(cluster.u_pair) == 1,
    )
    return boundary + integral


def _cluster_scale(model: AnModel, cluster: CycleCluster) -> float:
    if len(cluster.u_pair) == 2:
        return max(abs(cluster.u_pair[0] - cluster.u_pair[1]), 1e-3)
    return max(0.1, 0.1 * (1 + float(np.max(np.abs(model.u)))))


def _vanishing_point(model: AnModel, cluster: CycleCluster, coeffs) -> complex:
    """Critical value where a sheet-pair weight vector pinches."""
    nz = [m for c, m in zip(coeffs, cluster.sheets) if c != 0]
    if len(nz) != 2:
        raise ValueError("vanishing point is only defined for sheet-pair cycles")
    if len(cluster.u_pair) == 1:
        return cluster.u_pair[0]
    probe = 0.25 * _cluster_scale(model, cluster)
    best, arg = np.inf, cluster.u_pair[0]
    base = cluster_tracker(model, cluster)
    for u in cluster.u_pair:
        tr = base.copy()
        direction = (base.lam - u) / abs(base.lam - u)
        tr.step_to(u + probe * direction)
        d = abs(tr.roots[nz[0]] - tr.roots[nz[1]])
        if d < best:
            best, arg = d, u
    return arg


# ----------------------------------------------------------------------
# contour data: branch-consistent periods and propagators at every node
# ----------------------------------------------------------------------


class _NumericProvider:
    """Wick data at one contour node; cycles are labels 0, 1, 2 (the three
    one-point weight vectors of the cluster)."""

    def __init__(self, model, pe: PeriodEvaluator, chi_w, p0_form):
        self.model = model
        self.pe = pe
        self.chi_w = chi_w
        self.p0_form = p0_form  # 2x2 matrix on the (A, B) root basis
        self.cache: dict = {}

    def _ab_coords(self, label: int) -> np.ndarray:
        # chi_1 = (2A + B)/3, chi_2 = (B - A)/3, chi_3 = -(A + 2B)/3
        table = {
            0: np.array([2.0 / 3.0, 1.0 / 3.0]),
            1: np.array([-1.0 / 3.0, 1.0 / 3.0]),
            2: np.array([-1.0 / 3.0, -2.0 / 3.0]),
        }
        return table[label]

    def pair_minus(self, c, k: int, a: int) -> complex:
        key = ("pm", c, k, a)
        if key not in self.cache:
            self.cache[key] = self.pe.pairing(self.chi_w[c], -k, a)
        return self.cache[key]

    def upper_plus(self, c, k: int, cc: int) -> complex:
        key = ("up", c, k, cc)
        if key not in self.cache:
            vec = self.pe.upper(self.chi_w[c], k + 1)
            for ccc in range(self.model.N):
                self.cache[("up", c, k, ccc)] = (-1.0) ** k * complex(vec[ccc])
        return self.cache[key]

    def prop0(self, c1, c2) -> complex:
        key = ("p0", c1, c2)
        if key not in self.cache:
            x = self._ab_coords(c1)
            y = self._ab_coords(c2)
            self.cache[key] = complex(x @ self.p0_form @ y)
        return self.cache[key]

    def zero(self) -> complex:
        return 0.0 + 0.0j


class ContourData:
    """Everything node-local the extended kernel needs, computed once.

    The contour is marched sequentially from the basepoint (node 0), so all
    branches are continuation-consistent; the degree-0 propagator form at
    each node is assembled from a fixed spine integral to the basepoint
    plus incremental arc integrals, averaged over a circle in the
    coincidence offset nu.
    """

    def __init__(
        self,
        model: AnModel,
        contour: Contour,
        cluster: CycleCluster | None = None,
        kmin: int = -9,
        kmax: int = 9,
        rho_levels: int = 4,
        nu_frac: float = 0.3,
        arc_pts: int = 6,
        spine_pts: int = 12,
        substeps: int = 4,
    ):
        self.model = model
        self.contour = contour
        M = contour.nodes
        base_lam = contour.node(0)
        if cluster is None:
            cluster = find_cluster(model, basepoint=base_lam)
        elif abs(complex(cluster.base_lam) - base_lam) > 1e-12:
            cluster = rebase_cluster(model, cluster, base_lam)
        self.cluster = cluster
        base = cluster_tracker(model, cluster)
        cluster_us = set(np.round(self.cluster.u_pair, 12))
        for u in model.u:
            enclosed = abs(u - contour.center) < contour.radius
            member = complex(np.round(u, 12)) in cluster_us
            if enclosed != member:
                raise ValueError(
                    "contour must enclose exactly the cluster critical values"
                )
        self.nroots = model.n + 1
        self.chi_w = self.cluster.chis(self.nroots)
        self.wA = self.cluster.weight((1.0, -1.0, 0.0), self.nroots)
        self.wB = self.cluster.weight((0.0, 1.0, -1.0), self.nroots)
        self.uA = _vanishing_point(model, self.cluster, (1.0, -1.0, 0.0))
        self.uB = _vanishing_point(model, self.cluster, (0.0, 1.0, -1.0))

        # march the contour
        self.trackers = []
        cur = base.copy()
        self.trackers.append(cur.copy())
        for j in range(1, M + 1):
            for ss in range(1, substeps + 1):
                th = contour.theta0 + 2 * np.pi * (j - 1 + ss / substeps) / M
                cur.step_to(contour.center + contour.radius * np.exp(1j * th))
            if j < M:
                self.trackers.append(cur.copy())
        # full-loop sheet permutation (cluster sheets should 3-cycle)
        self.loop_perm = self._match_perm(self.trackers[0].roots, cur.roots)

        self.evaluators = [
            PeriodEvaluator.at(model, tr, kmin, kmax) for tr in self.trackers
        ]

        # propagator degree-0 form per node, on the (A, B) basis
        clear = min(
            min(abs(self.trackers[j].lam - u) for u in model.u) for j in range(M)
        )
        self.nu_radius = nu_frac * clear
        if len(self.cluster.u_pair) == 2:
            gap = abs(self.cluster.u_pair[0] - self.cluster.u_pair[1])
            self.nu_radius = min(self.nu_radius, 0.35 * gap)
        ladder = [self.nu_radius * 0.5 ** (k / 2.0) for k in range(rho_levels)]
        self.p0_forms = self._build_p0_forms(ladder, arc_pts, spine_pts)

    @staticmethod
    def _match_perm(r0: np.ndarray, r1: np.ndarray) -> list[int]:
        out = []
        for x in r1:
            out.append(int(np.argmin(np.abs(r0 - x))))
        return out

    # -- propagator engine ---------------------------------------------

    def _spine_integral(self, w_a, w_b, u_b, nu, pts, panels) -> complex:
        """Path integral from u_b to the contour basepoint (pinch-safe)."""
        singular = [u for u in self.model.u if abs(u - u_b) > 1e-12]
        return _pinch_integral(
            self.model,
            w_a,
            w_b,
            u_b,
            nu,
            self.trackers[0].lam,
            self.trackers[0],
            pts=pts,
            singular_pts=singular,
            cube_endpoint=len(self.cluster.u_pair) == 1,
        )

    def _build_p0_forms(self, rho_levels, arc_pts, spine_pts):
        """Degree-0 propagator form per node on the (A, B) root basis.

        For each basis pair, each offset radius rho and both perpendicular
        signs, the full propagator P(lam_j; nu) is assembled from one spine
        integral plus incremental arc integrals.  The even combination in nu
        has the Laurent expansion (c|c')/nu^2 + P0 + P2 nu^2 + ..., so after
        subtracting the exact double pole a Richardson pass in rho^2 leaves
        P0.  Perpendicular offsets keep the shifted branch point away from
        the integration path at every level.
        """
        model = self.model
        M = self.contour.nodes
        R = self.contour.radius
        ctr = self.contour.center
        basis = [(self.wA, self.uA), (self.wB, self.uB)]
        gram = np.array(
            [
                [float(np.dot(self.wA, self.wA)), float(np.dot(self.wA, self.wB))],
                [float(np.dot(self.wB, self.wA)), float(np.dot(self.wB, self.wB))],
            ]
        )
        xs, ws = np.polynomial.legendre.leggauss(arc_pts)
        lam0 = self.trackers[0].lam
        even = np.zeros((len(rho_levels), M, 2, 2), dtype=complex)
        for ia, (w_a, u_a) in enumerate(basis):
            for ib, (w_b, u_b) in enumerate(basis):
                perp = 1j * (lam0 - u_b) / abs(lam0 - u_b)
                for ir, rho in enumerate(rho_levels):
                    for sgn in (1.0, -1.0):
                        nu = sgn * rho * perp
                        run = self._spine_integral(w_a, w_b, u_b, nu, spine_pts, 0)
                        trb = self.trackers[0].copy()
                        tra = self.trackers[0].copy()
                        tra.step_to(trb.lam + nu)
                        for j in range(M):
                            lam_j = self.trackers[j].lam
                            pe_j = self.evaluators[j]
                            tr_mu = self.trackers[j].copy()
                            tr_mu.step_to(lam_j + nu)
                            pe_mu = PeriodEvaluator.at(model, tr_mu, 0, 1)
                            boundary = -complex(
                                pe_mu.upper(w_a, 1) @ model.eta @ pe_j.upper(w_b, 0)
                            )
                            even[ir, j, ia, ib] += 0.5 * (boundary + run)
                            th_a = self.contour.theta(j)
                            th_b = self.contour.theta(j + 1)
                            for x, wgt in zip(xs, ws):
                                th = 0.5 * (th_a + th_b) + 0.5 * (th_b - th_a) * x
                                s = ctr + R * np.exp(1j * th)
                                ds = 1j * R * np.exp(1j * th) * 0.5 * (th_b - th_a)
                                trb.step_to(s)
                                tra.step_to(s + nu)
                                run += wgt * _pair_i2_i0(self.model, tra, trb, w_a, w_b) * ds
                        # subtract the exact double pole for this nu
                        even[ir, :, ia, ib] -= 0.5 * gram[ia, ib] / nu**2
        # Richardson in rho^2 (even series in nu)
        out = even[0].copy()
        work = [even[ir].copy() for ir in range(len(rho_levels))]
        x2 = np.array([r**2 for r in rho_levels])
        nlev = len(rho_levels)
        for mlev in range(1, nlev):
            work = [
                (x2[i] * work[i + 1] - x2[i + mlev] * work[i]) / (x2[i] - x2[i + mlev])
                for i in range(nlev - mlev)
            ]
        self.p0_defect = float(np.max(np.abs(work[0] - out)))
        return work[0]

    def provider(self, j: int) -> _NumericProvider:
        return _NumericProvider(
            self.model, self.evaluators[j], self.chi_w, self.p0_forms[j]
        )


# ----------------------------------------------------------------------
# the extended integral and its uses
# ----------------------------------------------------------------------

_CHI_LABELS = (0, 1, 2)


def extended_integral(
    cdata: ContourData,
    table,
    g: int,
    target: tuple[int, int],
    slots,
    include_g1_const: bool = False,
) -> complex:
    """The contour form of the recursion step for <v_a psi^m, slots>_g.

    Sums r = 2, 3 over ordered tuples of distinct one-point cycles with
    1/(r-1)! weights; equals the cluster residues of the local recursion at
    semisimple points (genus 1 up to slot-free constants) and stays finite
    at the caustic.
    """
    a, m = target
    slots = tuple(sorted(slots))
    full = tuple(sorted(slots + ((a, m),)))
    if not is_tame(g, full) or not is_stable(g, 1 + len(slots)):
        return 0.0 + 0.0j
    model = cdata.model
    M = cdata.contour.nodes
    R = cdata.contour.radius
    mult = slot_multiplicity_factor(slots)
    total = 0.0 + 0.0j
    for j in range(M):
        prov = cdata.provider(j)
        pe = cdata.evaluators[j]
        node_val = 0.0 + 0.0j
        # r = 2
        for c1 in _CHI_LABELS:
            num = pe.pairing(cdata.chi_w[c1], -1 - m, a)
            for c2 in _CHI_LABELS:
                if c2 == c1:
                    continue
                y = pe.pairing(cdata.chi_w[c2] - cdata.chi_w[c1], -1, model.N - 1)
                w2 = omega_coeff(
                    prov, table, g, (c1, c2), slots, include_g1_const=include_g1_const
                )
                node_val += num / y * w2
        # r = 3
        for c1 in _CHI_LABELS:
            num = pe.pairing(cdata.chi_w[c1], -1 - m, a)
            rest = [c for c in _CHI_LABELS if c != c1]
            for c2, c3 in (rest, rest[::-1]):
                y2 = pe.pairing(cdata.chi_w[c2] - cdata.chi_w[c1], -1, model.N - 1)
                y3 = pe.pairing(cdata.chi_w[c3] - cdata.chi_w[c1], -1, model.N - 1)
                w3 = omega_coeff(prov, table, g, (c1, c2, c3), slots)
                node_val += num / (y2 * y3) * w3 / 2.0
        total += node_val * np.exp(1j * cdata.contour.theta(j))
    return complex(total * R / M * mult)


def cluster_indices(model: AnModel, cluster: CycleCluster) -> list[int]:
    """Indices (into model.u) of the cluster's critical values."""
    out = []
    for u in cluster.u_pair:
        out.append(int(np.argmin(np.abs(model.u - u))))
    return sorted(set(out))


def verify_theorem2(
    model: AnModel,
    table: CorrelatorTable,
    cdata: ContourData,
    g_max: int = 2,
    slot_max: int = 2,
) -> dict:
    """Contour kernel against the cluster residues of the local recursion.

    Every tame target with g <= g_max and at most ``slot_max`` extra slots
    is compared; genus-1 slot-free entries are reported but not compared
    (the contour side differs from them by a slot-independent constant).
    """
    from itertools import combinations_with_replacement

    from .recursion import eo_step

    idxs = cluster_indices(model, cluster=cdata.cluster)
    N = model.N
    rows = []
    max_dev = 0.0
    for g in range(0, g_max + 1):
        for n_extra in range(0, slot_max + 1):
            n = 1 + n_extra
            if not is_stable(g, n):
                continue
            budget = 3 * g - 3 + n
            alphabet = [(a, k) for a in range(N) for k in range(max(budget, 0) + 1)]
            for target in alphabet:
                a, mm = target
                for slots in combinations_with_replacement(alphabet, n_extra):
                    full = tuple(sorted(slots + (target,)))
                    if sum(k for _, k in full) > budget:
                        continue
                    parts, _, _ = eo_step(table, g, target, slots, return_parts=True)
                    mult = slot_multiplicity_factor(tuple(sorted(slots)))
                    residue_sum = 0.25 * mult * sum(parts[i] for i in idxs)
                    integral = extended_integral(cdata, table, g, target, slots)
                    compared = not (g == 1 and n_extra == 0)
                    scale = max(abs(residue_sum), abs(integral), 1e-9)
                    dev = abs(integral - residue_sum) / scale
                    rows.append(
                        {
                            "g": g,
                            "target": target,
                            "slots": list(slots),
                            "integral": integral,
                            "residue_sum": residue_sum,
                            "rel_dev": dev,
                            "compared": compared,
                        }
                    )
                    if compared:
                        max_dev = max(max_dev, dev)
    return {"rows": rows, "max_rel_dev": max_dev}


# ----------------------------------------------------------------------
# correlators at (or toward) the caustic
# ----------------------------------------------------------------------


@dataclass
class NumericTable:
    """Correlator store filled by the contour kernel; wick-compatible."""

    model: AnModel
    values: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.model.N

    def corr(self, g: int, ins) -> complex:
        g = int(g)
        ins = tuple(sorted((int(a), int(k)) for a, k in ins))
        if not is_stable(g, len(ins)) or not is_tame(g, ins):
            return 0.0
        if (g, ins) not in self.values:
            raise KeyError(f"missing numeric correlator (g={g}, ins={ins})")
        return self.values[(g, ins)]

    def put(self, g, ins, value):
        self.values[(int(g), tuple(sorted(ins)))] = complex(value)


def genus1_onepoint_closed(model: AnModel) -> dict:
    """<v_a psi>_{1,1} = Tr(v_a *)/24, valid at every point incl. caustics."""
    return {
        (1, ((a, 1),)): complex(np.trace(model.mult[a]) / 24.0)
        for a in range(model.N)
    }


def build_table_via_integral(
    model: AnModel,
    cdata: ContourData,
    g_max: int,
    n_max: int,
    genus1_onept: dict,
) -> NumericTable:
    """Correlator table built by the contour kernel alone (one-cluster models).

    Initial data: genus-0 structure constants and the genus-1 closed trace,
    both polynomial in t, plus the supplied genus-1 slot-free gradient
    (analytic across the caustic; obtained upstream by extrapolation).
    Only N = 2 is exercised; larger models would need numeric versions of
    the remaining single-point residues.
    """
    from itertools import combinations_with_replacement

    if model.N != 2:
        raise NotImplementedError("integral-built tables are specialized to N = 2")
    table = NumericTable(model=model)
    for (g, ins), v in initial_genus0_3pt(model).items():
        table.put(g, ins, v)
    for (g, ins), v in genus1_onepoint_closed(model).items():
        table.put(g, ins, v)
    for a in range(model.N):
        table.put(1, ((a, 0),), genus1_onept.get((1, ((a, 0),)), 0.0))
    N = model.N
    for g in range(0, g_max + 1):
        for n in range(1, n_max + 2 * (g_max - g) + 1):
            if not is_stable(g, n) or (g, n) in [(0, 3), (1, 1)]:
                continue
            budget = 3 * g - 3 + n
            alphabet = [(a, k) for a in range(N) for k in range(budget + 1)]
            for ins in combinations_with_replacement(alphabet, n):
                if sum(k for _, k in ins) > budget:
                    continue
                key = tuple(sorted(ins))
                first, rest = key[0], key[1:]
                val = extended_integral(cdata, table, g, first, rest)
                table.put(g, key, val)
    return table


def richardson(eps: np.ndarray, vals: np.ndarray) -> tuple[complex, float]:
    """Neville extrapolation to eps = 0; returns (limit, defect estimate)."""
    n = len(eps)
    T = np.array(vals, dtype=complex)
    prev_last = T[-1]
    for m in range(1, n):
        T = np.array(
            [
                (eps[i] * T[i + 1] - eps[i + m] * T[i]) / (eps[i] - eps[i + m])
                for i in range(n - m)
            ]
        )
    defect = abs(T[0] - prev_last)
    return complex(T[0]), float(defect)


def caustic_sweep(
    n: int,
    t_of_eps,
    eps_list,
    g_max: int = 2,
    chi_max: int = 3,
    K: int = 12,
    contour: Contour | None = None,
    nodes: int = 48,
) -> dict:
    """Correlators along a path t(eps) into the caustic, extrapolated and
    compared with the contour kernel evaluated directly at eps = 0.

    Targets are all tame keys with 2g - 2 + n <= chi_max.  Returns a report
    with per-key sequences, extrapolated limits, the direct caustic values,
    and deviations.
    """
    eps_arr = np.array(sorted(eps_list, reverse=True), dtype=float)
    per_key: dict = {}
    onept_seq: dict = {}
    for eps in eps_arr:
        model = build_model(n, t_of_eps(eps))
        frame = canonical_frame(model)
        rm = compute_r(model, frame, K)
        table = build_table(model, frame, rm, g_max, chi_max + 2 - 2 * g_max)
        for (g, ins), val in table.values.items():
            if 2 * g - 2 + len(ins) <= chi_max:
                per_key.setdefault((g, ins), []).append(val)
        for a in range(model.N):
            onept_seq.setdefault(a, []).append(table.values[(1, ((a, 0),))])

    extrapolated = {}
    defects = {}
    for key, seq in per_key.items():
        extrapolated[key], defects[key] = richardson(eps_arr, np.array(seq))

    model0 = build_model(n, t_of_eps(0.0))
    onept0 = {
        (1, ((a, 0),)): richardson(eps_arr, np.array(onept_seq[a]))[0]
        for a in range(model0.N)
    }
    if contour is None:
        m_big = build_model(n, t_of_eps(eps_arr[0]))
        spread = max(
            abs(m_big.u[i] - m_big.u[j])
            for i in range(m_big.N)
            for j in range(i + 1, m_big.N)
        )
        contour = Contour(
            center=complex(np.mean(model0.u)), radius=3.0 * spread, nodes=nodes
        )
    cdata = ContourData(model0, contour)
    table0 = build_table_via_integral(model0, cdata, g_max, chi_max + 2 - 2 * g_max, onept0)

    rows = []
    max_dev = 0.0
    for key in sorted(extrapolated):
        g, ins = key
        direct = table0.values.get(key)
        compared = direct is not None and not (g == 1 and len(ins) == 1 and ins[0][1] == 0)
        dev = None
        if compared:
            dev = abs(extrapolated[key] - direct) / max(abs(direct), abs(extrapolated[key]), 1e-8)
            max_dev = max(max_dev, dev)
        rows.append(
            {
                "g": g,
                "ins": list(ins),
                "values": [complex(v) for v in per_key[key]],
                "extrapolated": extrapolated[key],
                "defect": defects[key],
                "direct_caustic": direct,
                "rel_dev": dev,
            }
        )
    return {
        "epsilons": [float(e) for e in eps_arr],
        "rows": rows,
        "max_rel_dev": max_dev,
    }
