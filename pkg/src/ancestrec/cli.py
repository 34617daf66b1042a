"""Batch entry point: model specification, tables, verification, sweeps.

Every command emits a deterministic JSON report (complex numbers as
[re, im] pairs, sorted keys, fixed node counts).  Exit codes: 0 success,
1 verification failure, 2 validation error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .frobenius import CausticError, build_model, canonical_frame
from .localdata import v_matrices
from .quantization import ancestor_via_quantization
from .recursion import build_table, eo_step, initial_genus0_3pt, initial_genus1
from .rmatrix import RMatrix, compute_r, verify_r
from .series import MatrixSeriesZ

SCHEMA = 1


def _c(z) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def _encode(obj):
    if isinstance(obj, complex):
        return _c(obj)
    if isinstance(obj, np.complexfloating):
        return _c(complex(obj))
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_encode(x) for x in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(x) for x in obj]
    return obj


def parse_t(text: str, n: int) -> np.ndarray:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != n:
        raise ValueError(f"expected {n} components in --t, got {len(parts)}")
    return np.array([complex(p.replace("i", "j")) for p in parts])


def parse_model(text: str) -> int:
    text = text.strip().upper()
    if not text.startswith("A"):
        raise ValueError("model must look like A1, A2, A3, ...")
    n = int(text[1:])
    if n < 1:
        raise ValueError("model index must be >= 1")
    return n


# ----------------------------------------------------------------------
# cache
# ----------------------------------------------------------------------


def cache_dir(args) -> str | None:
    return args.cache or os.environ.get("ANCESTREC_CACHE")


def cache_key(n: int, t: np.ndarray, K: int) -> str:
    payload = json.dumps(
        {"n": n, "t": [_c(z) for z in t], "K": K, "version": __version__},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def cached_rmatrix(model, frame, K: int, directory: str | None) -> RMatrix:
    if directory is None:
        return compute_r(model, frame, K)
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"rmatrix-{cache_key(model.n, model.t, K)}.json")
    if os.path.exists(path):
        try:
            with open(path) as fh:
                blob = json.load(fh)
            if blob.get("version") == __version__:
                coeffs = [
                    np.array([[complex(re, im) for re, im in row] for row in mat])
                    for mat in blob["R"]
                ]
                R = MatrixSeriesZ(coeffs)
                ode, uni = verify_r(R, frame)
                return RMatrix(R=R, frame=frame, ode_residual=ode, unitarity_residual=uni)
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            print(f"warning: ignoring corrupt cache entry {path}: {exc}", file=sys.stderr)
    rm = compute_r(model, frame, K)
    blob = {
        "version": __version__,
        "K": K,
        "R": [[[_c(x) for x in row] for row in rm.R[k]] for k in range(K + 1)],
    }
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(blob, fh, sort_keys=True)
    os.replace(tmp, path)
    return rm


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------


def _model_block(model) -> dict:
    return {
        "type": f"A{model.n}",
        "n": model.n,
        "t": [_c(z) for z in model.t],
        "semisimple": bool(model.semisimple),
    }


def cmd_correlators(args) -> dict:
    n = parse_model(args.model)
    t = parse_t(args.t, n)
    model = build_model(n, t)
    if not model.semisimple and not args.caustic:
        raise CausticError("point is not semisimple; pass --caustic for the contour pipeline")
    if model.semisimple:
        frame = canonical_frame(model)
        rm = cached_rmatrix(model, frame, args.order, cache_dir(args))
        table = build_table(model, frame, rm, args.gmax, args.nmax)
        values, provenance = table.values, table.provenance
        residuals = {
            "ode": list(map(float, rm.ode_residual)),
            "unitarity": list(map(float, rm.unitarity_residual)),
        }
    else:
        from .caustic import caustic_sweep

        eps = [2.0 ** (-k) for k in range(3, 3 + args.sweep_points)]
        direction = np.zeros(n, dtype=complex)
        direction[0] = -1.0
        report = caustic_sweep(
            n,
            lambda e: t + e * direction,
            eps,
            g_max=args.gmax,
            chi_max=2 * args.gmax - 2 + args.nmax,
            K=args.order,
        )
        values = {
            (row["g"], tuple(tuple(x) for x in row["ins"])): row["direct_caustic"]
            for row in report["rows"]
            if row["direct_caustic"] is not None
        }
        provenance = {k: "integral" for k in values}
        residuals = {"sweep_max_rel_dev": report["max_rel_dev"]}
    corr = [
        {
            "g": g,
            "insertions": [[a + 1, k] for a, k in ins],
            "value": _c(values[(g, ins)]),
            "provenance": provenance.get((g, ins), ""),
        }
        for (g, ins) in sorted(values)
    ]
    return {
        "model": _model_block(model),
        "flat_point": [_c(z) for z in model.tau],
        "correlators": corr,
        "residual_report": residuals,
    }


def cmd_verify(args) -> dict:
    n = parse_model(args.model)
    t = parse_t(args.t, n)
    model = build_model(n, t)
    checks = []

    def check(name, value, tol):
        checks.append({"name": name, "value": float(value), "tol": tol, "pass": bool(value <= tol)})

    sym = 0.0
    pairing = np.einsum("abc,cd->abd", model.structure, model.eta)
    for a in range(n):
        for b in range(n):
            for c in range(n):
                sym = max(sym, abs(pairing[a, b, c] - pairing[a, c, b]), abs(pairing[a, b, c] - pairing[b, a, c]))
    check("frobenius_symmetry", sym, 1e-10)
    unit = np.max(np.abs(model.mult[n - 1] - np.eye(n)))
    check("unit_multiplication", unit, 1e-12)
    if model.semisimple:
        frame = canonical_frame(model)
        rm = cached_rmatrix(model, frame, args.order, cache_dir(args))
        check("psi_inverse_pair", np.max(np.abs(frame.Psi @ frame.PsiInv - np.eye(n))), 1e-10)
        check("euler_conjugation", np.max(np.abs(frame.PsiInv @ model.euler_mult @ frame.Psi - frame.U)), 1e-8)
        check("r_ode_recursion", float(np.max(rm.ode_residual)) if len(rm.ode_residual) else 0.0, args.tol)
        check("r_unitarity", float(np.max(rm.unitarity_residual)), args.tol)
        V = v_matrices(rm.R)
        vsym = max(
            np.max(np.abs(V[k, l] - V[l, k].T))
            for k in range(rm.K)
            for l in range(rm.K)
            if k + l <= rm.K - 1
        )
        check("v_matrix_symmetry", vsym, 1e-10)
        table = build_table(model, frame, rm, min(args.gmax, 2), min(args.nmax, 3))
        err = 0.0
        for (g, ins), ref in {**initial_genus0_3pt(model), **initial_genus1(model, frame, rm)}.items():
            val = eo_step(table, g, ins[0], ins[1:])
            err = max(err, abs(val - ref))
        check("recursion_vs_closed_forms", err, 1e-9)
        # dilaton: <..., v_N psi>_{g,n+1} = (2g-2+n) <...>_{g,n}
        derr = 0.0
        for (g, ins), val in list(table.values.items()):
            key2 = table.key(g, ins + ((n - 1, 1),))
            if key2 in table.values:
                derr = max(derr, abs(table.values[key2] - (2 * g - 2 + len(ins)) * val))
        check("dilaton_consistency", derr, 1e-8)
        if args.deep:
            oracle = ancestor_via_quantization(model, frame, rm, chi_max=3)
            oerr = 0.0
            for key, val in oracle.items():
                ref = table.values.get(key)
                if ref is not None:
                    oerr = max(oerr, abs(val - ref) / max(abs(ref), abs(val), 1e-6))
            check("quantization_oracle_agreement", oerr, 1e-6)
    ok = all(c["pass"] for c in checks)
    return {"model": _model_block(model), "checks": checks, "pass": ok}


def cmd_theorem2(args) -> dict:
    from .caustic import Contour, ContourData, verify_theorem2

    n = parse_model(args.model)
    t = parse_t(args.t, n)
    model = build_model(n, t)
    if not model.semisimple:
        raise CausticError("theorem2 comparison needs a semisimple point")
    frame = canonical_frame(model)
    rm = cached_rmatrix(model, frame, args.order, cache_dir(args))
    table = build_table(model, frame, rm, args.gmax, args.nmax)
    spread = max(
        abs(model.u[i] - model.u[j]) for i in range(n) for j in range(i + 1, n)
    )
    contour = Contour(center=complex(np.mean(model.u)), radius=3.0 * spread, nodes=args.nodes)
    cdata = ContourData(model, contour)
    rep = verify_theorem2(model, table, cdata, g_max=args.gmax, slot_max=args.slot_max)
    rows = [
        {
            "g": r["g"],
            "target": list(r["target"]),
            "slots": [list(s) for s in r["slots"]],
            "integral": _c(r["integral"]),
            "residue_sum": _c(r["residue_sum"]),
            "rel_dev": float(r["rel_dev"]),
            "compared": r["compared"],
        }
        for r in rep["rows"]
    ]
    return {
        "model": _model_block(model),
        "loop_permutation": list(cdata.loop_perm),
        "targets": rows,
        "max_rel_dev": float(rep["max_rel_dev"]),
        "pass": bool(rep["max_rel_dev"] <= args.tol),
    }


def cmd_sweep(args) -> dict:
    from .caustic import caustic_sweep

    n = parse_model(args.model)
    t = parse_t(args.t, n)
    eps = [float(e) for e in args.sweep.split(",")]
    if len(eps) < 2:
        raise ValueError("sweep needs at least two epsilon values for extrapolation")
    direction = np.zeros(n, dtype=complex)
    direction[0] = 1.0
    base = t.copy()
    base[0] = 0.0

    def t_of_eps(e):
        out = base.copy()
        out[0] = -e
        return out

    rep = caustic_sweep(n, t_of_eps, eps, g_max=args.gmax, K=args.order, nodes=args.nodes)
    rows = [
        {
            "g": r["g"],
            "ins": [list(x) for x in r["ins"]],
            "values": [_c(v) for v in r["values"]],
            "extrapolated": _c(r["extrapolated"]),
            "defect": float(r["defect"]),
            "direct_caustic": _c(r["direct_caustic"]) if r["direct_caustic"] is not None else None,
            "rel_dev": float(r["rel_dev"]) if r["rel_dev"] is not None else None,
        }
        for r in rep["rows"]
    ]
    return {
        "model": {"type": f"A{n}", "n": n, "t": [_c(z) for z in t]},
        "epsilons": rep["epsilons"],
        "rows": rows,
        "max_rel_dev": float(rep["max_rel_dev"]),
        "pass": bool(rep["max_rel_dev"] <= args.tol),
    }


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ancestrec", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--model", required=True, help="A1, A2, A3, ...")
        p.add_argument("--t", required=True, help="comma-separated complex parameters")
        p.add_argument("--gmax", type=int, default=2)
        p.add_argument("--nmax", type=int, default=3)
        p.add_argument("--order", type=int, default=12, help="z-truncation of the R series")
        p.add_argument("--tol", type=float, default=1e-10)
        p.add_argument("--cache", default=None)
        p.add_argument("--report", default=None, help="write the JSON report here")

    p = sub.add_parser("correlators", help="compute the correlator table")
    common(p)
    p.add_argument("--caustic", action="store_true", help="allow non-semisimple points")
    p.add_argument("--sweep-points", type=int, default=6)
    p.set_defaults(func=cmd_correlators)

    p = sub.add_parser("verify", help="run the invariant suite")
    common(p)
    p.add_argument("--deep", action="store_true", help="include the quantization oracle")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("theorem2", help="contour kernel vs residue recursion")
    common(p)
    p.add_argument("--nodes", type=int, default=48)
    p.add_argument("--slot-max", type=int, default=2)
    p.set_defaults(func=cmd_theorem2, tol=1e-5)

    p = sub.add_parser("sweep", help="approach the caustic and extrapolate")
    common(p)
    p.add_argument("--sweep", required=True, help="comma-separated epsilon values")
    p.add_argument("--nodes", type=int, default=48)
    p.set_defaults(func=cmd_sweep, tol=1e-3)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        report = args.func(args)
    except (ValueError, CausticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ArithmeticError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    report = {"schema": SCHEMA, "version": __version__, "command": args.command, **report}
    text = json.dumps(_encode(report), sort_keys=True, indent=1)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    if report.get("pass") is False:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
