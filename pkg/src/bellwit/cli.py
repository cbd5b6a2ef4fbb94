"""Command-line front end.

Exit codes: 0 when the run completed without detecting entanglement, 2 when
entanglement was detected, 1 on usage or input errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import formats, states
from .bds import (
    FourierMatrix,
    bds_from_probabilities,
    fourier_from_probabilities,
    mix_with_noise,
    probabilities_from_fourier,
    toeplitz_necessary_check,
)
from .criteria import ccnr, correlation_matrix, de_vicente, ppt_check, ssc_value
from .formats import fmt
from .qlinalg import ATOL, as_dims, as_matrix, hermitian_part
from .search import (
    SupportSet,
    diophantine_solutions,
    dichotomous_state,
    exhaustive_dichotomous_search,
    homogeneous_support_search,
    maximize_ccnr_pt_invariant,
)
from .witness import (
    DETECT_TOL,
    g_batch,
    grid_axis,
    measurement_filtration,
    optimal_witness,
    scan_noise_threshold,
    sparse_witness,
    witness_expectation,
)

EXIT_OK, EXIT_ERROR, EXIT_DETECTED = 0, 1, 2
DEFAULT_GRID = "0:2:200"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_grid(text: str) -> tuple[float, float, int]:
    """``lo:hi:steps`` with inclusive endpoints."""
    try:
        lo, hi, steps = text.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError:
        raise ValueError(f"grid must look like lo:hi:steps, got {text!r}") from None
    if steps < 1 or hi < lo:
        raise ValueError(f"invalid grid {text!r}")
    return lo, hi, steps


# --- state input ---------------------------------------------------------------


def _add_state_args(p):
    g = p.add_argument_group("state")
    g.add_argument("--builtin", choices=states.BUILTINS, help="named state")
    g.add_argument("--q", type=float, help="Werner parameter")
    g.add_argument("--bell", nargs=2, type=int, metavar=("A", "B"), help="pure Bell state |phi^AB>")
    g.add_argument("--maximally-mixed", nargs=2, type=int, metavar=("DA", "DB"))
    g.add_argument("--dims", nargs=2, type=int, metavar=("DA", "DB"), help="local dimensions, d_A <= d_B")
    g.add_argument("--probabilities", metavar="FILE", help="probability matrix JSON")
    g.add_argument("--fourier", metavar="FILE", help="Fourier matrix JSON, or 'all-ones'")
    g.add_argument("--support", metavar="FILE", help="support set JSON (dichotomous state)")
    g.add_argument("--density", metavar="FILE", help="density matrix JSON (any state)")


def load_state(args):
    """Return ``(rho, dims, P)``; ``P`` is ``None`` for general density matrices."""
    sources = [
        s
        for s in ("builtin", "bell", "maximally_mixed", "probabilities", "fourier", "support", "density")
        if getattr(args, s) is not None
    ]
    if len(sources) != 1:
        raise UsageError("give exactly one state source")
    src = sources[0]
    dims = tuple(args.dims) if args.dims else None
    if src == "builtin":
        if args.builtin == "werner" and args.q is None:
            raise UsageError("--builtin werner needs --q")
        P = states.builtin(args.builtin, q=args.q, dims=dims or (2, 2))
    elif src == "bell":
        P = states.builtin("bell", alpha=args.bell[0], beta=args.bell[1], dims=dims or (2, 2))
    elif src == "maximally_mixed":
        P = states.builtin("maximally-mixed", dims=tuple(args.maximally_mixed))
    elif src == "probabilities":
        P = formats.probabilities_from_json(formats.load_json(args.probabilities))
    elif src == "fourier":
        if args.fourier == "all-ones":
            if dims is None:
                raise UsageError("--fourier all-ones needs --dims")
            F = FourierMatrix(dims, np.ones(dims))
        else:
            F = formats.fourier_from_json(formats.load_json(args.fourier))
        P = probabilities_from_fourier(F)
    elif src == "support":
        P = dichotomous_state(SupportSet.from_json(formats.load_json(args.support)))
    else:
        dims, m = formats.matrix_from_json(formats.load_json(args.density))
        dims = as_dims(dims)
        rho = hermitian_part(as_matrix(m))
        if rho.shape != (dims.total, dims.total):
            raise ValueError(f"density matrix of shape {rho.shape} does not match dims {tuple(dims)}")
        if abs(np.trace(rho).real - 1) > ATOL or np.linalg.eigvalsh(rho)[0] < -ATOL:
            raise ValueError("density matrix must be positive semidefinite with unit trace")
        return rho, dims, None
    return bds_from_probabilities(P), P.dims, P


# --- output --------------------------------------------------------------------


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _outdir(path: str | None) -> str:
    if not path:
        raise UsageError("this command writes several files; give --out DIR")
    os.makedirs(path, exist_ok=True)
    return path


def _write(path: str, text: str):
    with open(path, "w") as fh:
        fh.write(text if text.endswith("\n") else text + "\n")


def _grid_csv(P) -> str:
    d_A, d_B = P.dims
    return formats.csv_rows(["alpha", "beta", "value"], ((a, b, P.p[a, b]) for a in range(d_A) for b in range(d_B)))


# --- commands ------------------------------------------------------------------


def state_artifacts(P) -> dict:
    F = fourier_from_probabilities(P)
    tc = toeplitz_necessary_check(F)
    return {
        "probabilities": formats.matrix_to_json(P.p, P.dims),
        "fourier": formats.matrix_to_json(F.lam, P.dims),
        "density": formats.matrix_to_json(bds_from_probabilities(P), P.dims),
        "toeplitz": {"pass": tc["pass"], "first_failure": tc["first_failure"]},
    }


def cmd_state(args) -> int:
    rho, dims, P = load_state(args)
    if P is None:
        raise UsageError("state expects a Bell diagonal input")
    art = state_artifacts(P)
    if args.out:
        out = _outdir(args.out)
        for key, val in art.items():
            _write(os.path.join(out, f"{key}.json"), formats.dumps(val))
        _write(os.path.join(out, "grid.csv"), _grid_csv(P))
    else:
        _emit(formats.dumps(art), None)
    return EXIT_OK


def analyze_report(rho, dims, points=(), grid=None, tol: float = ATOL):
    """Criterion report and, for a grid, the arrays ``(X, Y, g)`` (else ``None``)."""
    dims = as_dims(dims)
    pt = ppt_check(rho, dims)
    cc = ccnr(rho, dims)
    dv = de_vicente(rho, dims)
    C = correlation_matrix(rho, dims)
    ssc = []
    for x, y in points:
        r = ssc_value(C, x, y)
        ssc.append({"x": fmt(x), "y": fmt(y), "g": fmt(r.g), "relative": fmt(r.relative)})
    report = {
        "d_A": dims.d_A,
        "d_B": dims.d_B,
        "ppt": {"is_ppt": pt["is_ppt"], "min_eig": fmt(pt["min_eig"])},
        "ccnr": {k: fmt(v) if k != "detected" else v for k, v in cc.items()},
        "de_vicente": {k: fmt(v) if k != "detected" else v for k, v in dv.items()},
        "ssc": ssc,
    }
    rows = None
    detected = (not pt["is_ppt"]) or cc["detected"] or dv["detected"] or any(s["g"] < -tol for s in ssc)
    if grid is not None:
        lo, hi, steps = grid
        xs = grid_axis(lo, hi, steps)
        X, Y = (a.ravel() for a in np.meshgrid(xs, xs, indexing="ij"))
        g = g_batch(C.c, dims, X, Y, np.zeros(X.size))
        R = np.sqrt(dims.d_A - 1 + X**2) * np.sqrt(dims.d_B - 1 + Y**2)
        k, kr = int(np.argmin(g)), int(np.argmin(g / R))
        report["ssc_grid"] = {
            "grid": f"{lo}:{hi}:{steps}",
            "min_g": {"x": fmt(X[k]), "y": fmt(Y[k]), "g": fmt(g[k])},
            "min_relative": {"x": fmt(X[kr]), "y": fmt(Y[kr]), "relative": fmt(g[kr] / R[kr])},
            "detected_points": int(np.sum(g < -tol)),
        }
        rows = (X, Y, g)
        detected = detected or bool(np.any(g < -tol))
    report["detected"] = bool(detected)
    return report, rows


def cmd_analyze(args) -> int:
    rho, dims, _ = load_state(args)
    if args.eps:
        rho = mix_with_noise(rho, args.eps)
    points = [tuple(float(v) for v in p.split(",")) for p in args.xy or []]
    grid = parse_grid(args.grid) if args.grid else None
    report, rows = analyze_report(rho, dims, points, grid, args.tol)
    if args.csv and rows is not None:
        _write(args.csv, formats.csv_rows(["x", "y", "value"], zip(*rows)))
    _emit(formats.dumps(report), args.out)
    return EXIT_DETECTED if report["detected"] else EXIT_OK


def cmd_witness(args) -> int:
    rho, dims, _ = load_state(args)
    if args.mode in ("optimal", "sparse"):
        if args.mode == "optimal":
            W = optimal_witness(rho, dims, args.x, args.y)
        else:
            res = sparse_witness(rho, dims, args.x, args.y, args.l, restarts=args.restarts, seed=args.seed)
            if res is None:
                _emit(formats.dumps({"found": False, "x": fmt(args.x), "y": fmt(args.y), "l": args.l}), args.out)
                return EXIT_OK
            W = res["witness"]
        value = witness_expectation(W, rho)
        doc = {**formats.witness_to_json(W), "expectation": fmt(value), "measurements": len(W.measurements())}
        _emit(formats.dumps(doc), args.out)
        return EXIT_DETECTED if value < -args.tol else EXIT_OK
    lo, hi, steps = parse_grid(args.grid)
    if args.mode == "scan":
        scan = scan_noise_threshold(rho, dims, (lo, hi), (lo, hi), steps, tol=args.eps_tol, workers=args.workers)
        _emit(formats.csv_rows(["x", "y", "value"], scan.rows()), args.out)
        summary = {"max": fmt(scan.max), "argmax_points": len(scan.argmax_set), "monotone": scan.monotone}
        print(formats.dumps(summary), file=sys.stderr)
        return EXIT_DETECTED if scan.max > 0 else EXIT_OK
    filt = measurement_filtration(
        rho, dims, (lo, hi), (lo, hi), steps, ell_max=args.lmax, restarts=args.restarts, seed=args.seed, workers=args.workers
    )
    _emit(formats.csv_rows(["x", "y", "value"], filt.rows()), args.out)
    counts = [int(filt.region(ell).sum()) for ell in range(1, filt.ell_max + 1)]
    print(formats.dumps({"region_sizes": counts, "nested": filt.nested()}), file=sys.stderr)
    return EXIT_DETECTED if counts[-1] else EXIT_OK


def cmd_search(args) -> int:
    lines = []
    found = False
    if args.kind == "diophantine":
        for s in diophantine_solutions(args.dmin, args.dmax):
            lines.append({"d": s.d, "size": s.cardinality, "k": s.k, "ccnr_excess": fmt(s.ccnr_excess)})
    elif args.kind == "dichotomous":
        if (args.d is None) == (args.dims is None):
            raise UsageError("give exactly one of --d and --dims")
        dims = (args.d, args.d) if args.d else tuple(args.dims)
        size = args.size if args.size == "any" else int(args.size)
        hits = exhaustive_dichotomous_search(
            dims, size, args.pred.split(","), workers=args.workers, budget=args.budget, checkpoint=args.checkpoint
        )
        for h in hits:
            lines.append({**h.support.to_json(), **{k: fmt(v) if isinstance(v, float) else v for k, v in h.values.items()}})
        found = any(h.values.get("ccnr", 0) > np.sqrt(np.prod(dims)) + ATOL and h.values.get("min_pt_eig", -1) >= -ATOL for h in hits)
    elif args.kind == "homogeneous":
        S = homogeneous_support_search(args.d, args.size, args.k, seed=args.seed)
        if S is not None:
            lines.append(S.to_json())
    else:
        res = maximize_ccnr_pt_invariant(args.d, restarts=args.restarts, seed=args.seed)
        lines.append({"d": args.d, "best_value": fmt(res["best_value"]), "fourier": formats.complex_entries(res["best_lambda"].lam)})
    _emit("".join(formats.dumps(x) + "\n" for x in lines) or "\n", args.out)
    return EXIT_DETECTED if found else EXIT_OK


REPRODUCTIONS = ("werner", "noise-scan", "supports", "filtration", "diophantine")


def cmd_reproduce(args) -> int:
    out = _outdir(args.out)
    if args.target == "werner":
        for q in (0.0, 1 / 3, 2 / 3, 1.0):
            P = states.builtin("werner", q=q)
            _write(os.path.join(out, f"werner_q{q:.4f}.csv"), _grid_csv(P))
    elif args.target == "noise-scan":
        P = states.builtin("bound-4x6-a")
        lo, hi, steps = parse_grid(args.grid)
        scan = scan_noise_threshold(bds_from_probabilities(P), P.dims, (lo, hi), (lo, hi), steps, workers=args.workers)
        _write(os.path.join(out, "noise_scan.csv"), formats.csv_rows(["x", "y", "value"], scan.rows()))
        _write(os.path.join(out, "noise_scan.json"), formats.dumps({"max": fmt(scan.max), "argmax": scan.argmax_set}))
    elif args.target == "supports":
        for name in states.SUPPORTS:
            _write(os.path.join(out, f"{name}.csv"), _grid_csv(states.builtin(name)))
    elif args.target == "filtration":
        P = states.builtin("bell", dims=(2, 3))
        lo, hi, steps = parse_grid(args.grid)
        filt = measurement_filtration(bds_from_probabilities(P), P.dims, (lo, hi), (lo, hi), steps, ell_max=6, seed=args.seed, workers=args.workers)
        _write(os.path.join(out, "filtration.csv"), formats.csv_rows(["x", "y", "value"], filt.rows()))
    else:
        rows = diophantine_solutions(2, 12)
        _write(
            os.path.join(out, "diophantine.csv"),
            formats.csv_rows(["d", "size", "k", "ccnr_excess"], ((s.d, s.cardinality, s.k, s.ccnr_excess) for s in rows)),
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", type=float, default=DETECT_TOL, help="detection tolerance")
    common.add_argument("--out", help="output file (or directory for multi-file commands)")
    common.add_argument("--workers", type=int, default=None, help="worker processes (default: $BELLWIT_WORKERS or 1)")
    common.add_argument("-v", "--verbose", action="store_true")
    p = _Parser(prog="bellwit", description="Bell diagonal states, separability criteria and witnesses.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("state", parents=[common], help="probability, Fourier and density matrices of a state")
    _add_state_args(s)
    s.set_defaults(func=cmd_state)

    a = sub.add_parser("analyze", parents=[common], help="PPT, realignment, de Vicente and trace-norm criteria")
    _add_state_args(a)
    a.add_argument("--eps", type=float, default=0.0, help="white-noise fraction mixed in")
    a.add_argument("--xy", action="append", metavar="X,Y", help="evaluate g at (X, Y); repeatable")
    a.add_argument("--grid", help="evaluate g on lo:hi:steps x lo:hi:steps")
    a.add_argument("--csv", help="write the grid values of g to this CSV file")
    a.set_defaults(func=cmd_analyze)

    w = sub.add_parser("witness", parents=[common], help="witness construction and parameter scans")
    w.add_argument("mode", choices=("optimal", "sparse", "scan", "filtration"))
    _add_state_args(w)
    w.add_argument("--x", type=float, default=1.0)
    w.add_argument("--y", type=float, default=1.0)
    w.add_argument("--l", type=int, default=3, help="number of measurements for sparse witnesses")
    w.add_argument("--lmax", type=int, default=6)
    w.add_argument("--restarts", type=int, default=8)
    w.add_argument("--grid", default=DEFAULT_GRID)
    w.add_argument("--eps-tol", type=float, default=1e-5, help="bisection tolerance of the noise scan")
    w.set_defaults(func=cmd_witness)

    q = sub.add_parser("search", parents=[common], help="searches over dichotomous and PT-invariant states")
    q.add_argument("kind", choices=("dichotomous", "diophantine", "pt-invariant", "homogeneous"))
    q.add_argument("--d", type=int)
    q.add_argument("--dims", nargs=2, type=int, metavar=("DA", "DB"))
    q.add_argument("--size", default="any")
    q.add_argument("--k", type=int)
    q.add_argument("--pred", default="ppt,ccnr_detected", help="comma separated predicates")
    q.add_argument("--dmin", type=int, default=2)
    q.add_argument("--dmax", type=int, default=12)
    q.add_argument("--restarts", type=int, default=64)
    q.add_argument("--budget", type=int, default=50_000_000)
    q.add_argument("--checkpoint", help="checkpoint file for resumable enumeration")
    q.set_defaults(func=cmd_search)

    r = sub.add_parser("reproduce", parents=[common], help="plot-ready data for the standard examples")
    r.add_argument("target", choices=REPRODUCTIONS)
    r.add_argument("--grid", default=DEFAULT_GRID)
    r.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        if args.command == "search" and args.kind in ("pt-invariant", "homogeneous") and args.d is None:
            raise UsageError(f"search {args.kind} needs --d")
        if args.command == "search" and args.kind == "homogeneous" and (args.k is None or args.size == "any"):
            raise UsageError("search homogeneous needs --size and --k")
        if args.command == "search" and args.kind == "homogeneous":
            args.size = int(args.size)
        return args.func(args)
    except UsageError as exc:
        print(f"bellwit: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, NotImplementedError, OSError, ArithmeticError, KeyError) as exc:
        print(f"bellwit: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
