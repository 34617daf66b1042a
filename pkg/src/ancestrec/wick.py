"""Wick assembly of the symmetric correlator forms.

Computes the coefficient of a given t-monomial in the genus-g expansion of
the r-cycle forms (r = 2 for the residue recursion, r = 2, 3 for the
extended contour kernel).  The same assembler runs in two modes through a
provider object: Puiseux series at a critical value, or plain complex
numbers at a contour point.  Providers expose

    pair_minus(c, k, a)   value of (I^{(-k)}_c, v_a)        [omega slot (a, k)]
    upper_plus(c, k, cc)  value of (-1)^k [I^{(k+1)}_c]^cc  [psi^k insertion]
    prop0(c1, c2)         the degree-0 propagator coefficient
    zero()                additive identity of the value type

Sign conventions follow the quantized-field formula: the annihilation half
of each field carries a minus sign, so every insertion block enters with
(-1) per derivation field; pinned by the Witten-Kontsevich anchors.

Genus bookkeeping: the 2-cycle form is the hbar-expansion of the raw
normal-ordered product; the 3-cycle form carries one extra factor of
hbar^(1/2) so that its expansion also runs over integer genus levels.  The
contributions per derivation-subset are:

r = 2:  P0 at g=1 | omega.omega at g=0 | -omega.<+>_g |
        <+,+>_{g-1} + sum_{g'+g''=g} <+>_{g'} <+>_{g''}
r = 3:  P0.omega at g=1 | -P0.<+>_{g-1} | omega^3 at g=0 |
        -omega.omega.<+>_g | +omega.(<+,+>_{g-1} + split_g) |
        -(<+,+,+>_{g-2} + sum_{pairs} <+,+>.<+> over g'+g''=g-1
          + triple split over g'+g''+g'''=g)
"""

from __future__ import annotations

from itertools import combinations
from typing import Sequence

__all__ = ["omega_coeff", "slot_multiplicity_factor", "submultiset_splits"]

Slot = tuple[int, int]  # (flat index a, psi power k)


def _stable(g: int, n: int) -> bool:
    return 2 * g - 2 + n > 0


def slot_multiplicity_factor(slots: Sequence[Slot]) -> float:
    """Product of mult! over repeated slots."""
    out = 1.0
    seen: dict[Slot, int] = {}
    for s in slots:
        seen[s] = seen.get(s, 0) + 1
        out *= seen[s]
    return out


def submultiset_splits(slots: tuple[Slot, ...]):
    """Yield every (sub, rest) split of a sorted slot multiset, each once."""
    distinct = sorted(set(slots))
    counts = [slots.count(s) for s in distinct]

    def rec(idx, chosen):
        if idx == len(distinct):
            sub = tuple(sorted(chosen))
            rest_list = list(slots)
            for s in sub:
                rest_list.remove(s)
            yield sub, tuple(sorted(rest_list))
            return
        s, cnt = distinct[idx], counts[idx]
        for take in range(cnt + 1):
            yield from rec(idx + 1, chosen + [s] * take)

    yield from rec(0, [])


def _single_slot_splits(slots: tuple[Slot, ...]):
    """(slot, rest) for each distinct slot value."""
    for s in sorted(set(slots)):
        rest = list(slots)
        rest.remove(s)
        yield s, tuple(sorted(rest))


def _corrblock(table, g: int, fixed: Sequence[Slot], slots: tuple[Slot, ...]) -> complex:
    """<fixed..., slots...>_g divided by the slot multiplicities."""
    ins = tuple(sorted(tuple(fixed) + slots))
    val = table.corr(g, ins)
    if val == 0:
        return 0.0
    return val / slot_multiplicity_factor(slots)


def _tame_budget(table, g: int, n: int) -> int:
    return 3 * g - 3 + n


def _insblock(provider, table, g: int, c, slots: tuple[Slot, ...]):
    """<phi^+_c(psi), slots...>_g as a provider value (no derivation sign)."""
    key = ("ins", g, c, slots)
    cache = provider.cache
    if key in cache:
        return cache[key]
    out = provider.zero()
    n = 1 + len(slots)
    if 2 * g - 2 + n > 0:
        budget = _tame_budget(table, g, n) - sum(k for _, k in slots)
        for k in range(0, max(budget, -1) + 1):
            for cc in range(table.N):
                coeff = _corrblock(table, g, [(cc, k)], slots)
                if coeff == 0:
                    continue
                out = out + provider.upper_plus(c, k, cc) * coeff
    cache[key] = out
    return out


def _dblock(provider, table, g: int, c1, c2, slots: tuple[Slot, ...]):
    """<phi^+_{c1}, phi^+_{c2}, slots...>_g (joint block)."""
    key = ("dbl", g, c1, c2, slots)
    cache = provider.cache
    if key in cache:
        return cache[key]
    out = provider.zero()
    n = 2 + len(slots)
    if 2 * g - 2 + n > 0:
        budget = _tame_budget(table, g, n) - sum(k for _, k in slots)
        for k1 in range(0, max(budget, -1) + 1):
            for k2 in range(0, budget - k1 + 1):
                for a1 in range(table.N):
                    u1 = provider.upper_plus(c1, k1, a1)
                    for a2 in range(table.N):
                        coeff = _corrblock(table, g, [(a1, k1), (a2, k2)], slots)
                        if coeff == 0:
                            continue
                        out = out + u1 * provider.upper_plus(c2, k2, a2) * coeff
    cache[key] = out
    return out


def _tblock(provider, table, g: int, c1, c2, c3, slots: tuple[Slot, ...]):
    """<phi^+_{c1}, phi^+_{c2}, phi^+_{c3}, slots...>_g."""
    out = provider.zero()
    n = 3 + len(slots)
    if 2 * g - 2 + n <= 0:
        return out
    budget = _tame_budget(table, g, n) - sum(k for _, k in slots)
    for k1 in range(0, max(budget, -1) + 1):
        for a1 in range(table.N):
            u1 = provider.upper_plus(c1, k1, a1)
            for k2 in range(0, budget - k1 + 1):
                for a2 in range(table.N):
                    u12 = u1 * provider.upper_plus(c2, k2, a2)
                    for k3 in range(0, budget - k1 - k2 + 1):
                        for a3 in range(table.N):
                            coeff = _corrblock(
                                table, g, [(a1, k1), (a2, k2), (a3, k3)], slots
                            )
                            if coeff == 0:
                                continue
                            out = out + u12 * provider.upper_plus(c3, k3, a3) * coeff
    return out


def _omega2(provider, table, g, c1, c2, slots, include_g1_const):
    out = provider.zero()
    if g == 1 and not slots and include_g1_const:
        out = out + provider.prop0(c1, c2)
    if g == 0 and len(slots) == 2:
        for sub, rest in _single_slot_splits(slots):
            a, k = sub
            r, kr = rest[0]
            out = out + provider.pair_minus(c1, k, a) * provider.pair_minus(c2, kr, r)
    if slots:
        for s, rest in _single_slot_splits(slots):
            a, k = s
            out = out - provider.pair_minus(c1, k, a) * _insblock(provider, table, g, c2, rest)
            out = out - provider.pair_minus(c2, k, a) * _insblock(provider, table, g, c1, rest)
    if g >= 1:
        out = out + _dblock(provider, table, g - 1, c1, c2, slots)
    for gp in range(0, g + 1):
        for sub, rest in submultiset_splits(slots):
            if not (_stable(gp, 1 + len(sub)) and _stable(g - gp, 1 + len(rest))):
                continue
            b1 = _insblock(provider, table, gp, c1, sub)
            b2 = _insblock(provider, table, g - gp, c2, rest)
            out = out + b1 * b2
    return out


def _omega3(provider, table, g, c1, c2, c3, slots):
    cyc = (c1, c2, c3)
    out = provider.zero()
    # single contraction, one leftover field; the equal-point contraction
    # enters the three-cycle form with the opposite sign to the two-cycle
    # normal ordering (pinned by the contour-vs-residue anchor, see tests)
    for (i, j) in combinations(range(3), 2):
        l = 3 - i - j
        p0 = provider.prop0(cyc[i], cyc[j])
        if g == 1 and len(slots) == 1:
            a, k = slots[0]
            out = out - p0 * provider.pair_minus(cyc[l], k, a)
        if g >= 1:
            out = out + p0 * _insblock(provider, table, g - 1, cyc[l], slots)
    # no contraction: omega^3 (g = 0 only)
    if g == 0 and len(slots) == 3:
        for s1, rest1 in _single_slot_splits(slots):
            for s2, rest2 in _single_slot_splits(rest1):
                (a1, k1), (a2, k2), (a3, k3) = s1, s2, rest2[0]
                out = out + (
                    provider.pair_minus(c1, k1, a1)
                    * provider.pair_minus(c2, k2, a2)
                    * provider.pair_minus(c3, k3, a3)
                )
    # one derivation field
    for l in range(3):
        i, j = [x for x in range(3) if x != l]
        for si, rest in _single_slot_splits(slots) if slots else []:
            ai, ki = si
            wi = provider.pair_minus(cyc[i], ki, ai)
            for sj, rest2 in _single_slot_splits(rest) if rest else []:
                aj, kj = sj
                out = out - wi * provider.pair_minus(cyc[j], kj, aj) * _insblock(
                    provider, table, g, cyc[l], rest2
                )
    # two derivation fields
    for j in range(3):
        l1, l2 = [x for x in range(3) if x != j]
        for sj, rest in _single_slot_splits(slots) if slots else []:
            aj, kj = sj
            wj = provider.pair_minus(cyc[j], kj, aj)
            if g >= 1:
                out = out + wj * _dblock(provider, table, g - 1, cyc[l1], cyc[l2], rest)
            for gp in range(0, g + 1):
                for sub, rest2 in submultiset_splits(rest):
                    if not (_stable(gp, 1 + len(sub)) and _stable(g - gp, 1 + len(rest2))):
                        continue
                    out = out + wj * _insblock(provider, table, gp, cyc[l1], sub) * _insblock(
                        provider, table, g - gp, cyc[l2], rest2
                    )
    # three derivation fields
    if g >= 2:
        out = out - _tblock(provider, table, g - 2, c1, c2, c3, slots)
    for (i, j) in combinations(range(3), 2):
        l = 3 - i - j
        for gp in range(0, g):
            gpp = g - 1 - gp
            for sub, rest in submultiset_splits(slots):
                if not (_stable(gp, 2 + len(sub)) and _stable(gpp, 1 + len(rest))):
                    continue
                out = out - _dblock(provider, table, gp, cyc[i], cyc[j], sub) * _insblock(
                    provider, table, gpp, cyc[l], rest
                )
    for g1 in range(0, g + 1):
        for g2 in range(0, g - g1 + 1):
            g3 = g - g1 - g2
            for sub1, rest1 in submultiset_splits(slots):
                if not _stable(g1, 1 + len(sub1)):
                    continue
                b1 = _insblock(provider, table, g1, c1, sub1)
                for sub2, rest2 in submultiset_splits(rest1):
                    if not (_stable(g2, 1 + len(sub2)) and _stable(g3, 1 + len(rest2))):
                        continue
                    out = out - b1 * _insblock(provider, table, g2, c2, sub2) * _insblock(
                        provider, table, g3, c3, rest2
                    )
    return out


def omega_coeff(
    provider,
    table,
    g: int,
    cycles: Sequence,
    slots: Sequence[Slot],
    include_g1_const: bool = True,
):
    """Coefficient of the ``slots`` monomial in the genus-g r-cycle form.

    ``include_g1_const`` drops the lambda-local normal-ordering constant of
    the 2-cycle form (only relevant for genus-1 slot-free targets, which the
    contour pipeline cannot compare anyway).
    """
    slots = tuple(sorted(slots))
    if len(cycles) == 2:
        return _omega2(provider, table, g, cycles[0], cycles[1], slots, include_g1_const)
    if len(cycles) == 3:
        return _omega3(provider, table, g, *cycles, slots)
    raise ValueError("only 2- and 3-cycle forms are assembled")
