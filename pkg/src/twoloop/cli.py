"""Command-line front end.

    twoloop analyze --eps 1e-3 --radius 0.05 --out run/
    twoloop bounds --nu 1 1 1 1 --out run/

Every command writes ``summary.json`` (sorted keys, no timestamps) into
``--out``; failures print a JSON error record and exit with 2 (invalid
input), 3 (numerical failure) or 4 (regime violation).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from fractions import Fraction

import numpy as np

from . import bounds as B
from .errors import PreconditionError, TwoLoopError, ValidationError

COMMANDS = ("analyze", "melnikov", "dulac", "zero-locus", "count", "bounds")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="twoloop", description="Limit cycles near a two-saddle loop.")
    p.add_argument("cmd", nargs="?", choices=COMMANDS, help="command (or use --command)")
    p.add_argument("--command", choices=COMMANDS, dest="command_flag")
    p.add_argument("--system", help="system definition (JSON); default: the regression system")
    p.add_argument("--alpha", type=float, default=1.0, help="regression system: omega = (alpha + beta x^2) y dx")
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--radius", type=float, default=0.05)
    p.add_argument("--grid", type=int, default=16, help="number of points on the s grid")
    p.add_argument("--out", default="twoloop-out")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nu", type=str, nargs=4, metavar=("NU_P", "NU_1", "NU_2", "NU_12"))
    p.add_argument("--pq", type=str, nargs=4, metavar=("P", "Q", "P1", "P2"),
                   help="inputs of the example-form comparison")
    p.add_argument("--phis", type=float, nargs="*", default=None, help="arguments probed by 'dulac'")
    return p


# ---------------------------------------------------------------------------
# output helpers

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, Fraction):
        return int(obj) if obj.denominator == 1 else str(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return (v + 0.0) if math.isfinite(v) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    matplotlib.rcParams["svg.hashsalt"] = "twoloop"
    matplotlib.rcParams["svg.fonttype"] = "none"
    return plt


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    import matplotlib.pyplot as plt
    plt.close(fig)


# ---------------------------------------------------------------------------
# pipeline pieces

def load(args):
    from .system_model import canonical_system, load_system
    if args.system:
        return load_system(args.system)
    return canonical_system(args.alpha, args.beta)


def _fit(samples, name, warn):
    from .melnikov import characteristic_number
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            m = characteristic_number(samples)
        for c in caught:
            warn.append(f"{name}: {c.message}")
        return m
    except TwoLoopError as exc:
        warn.append(f"{name}: {exc}")
        return None


def run_melnikov(system, args, out, summary, warn):
    from .melnikov import decompose_log, default_grid, melnikov_M1, vanishing_parts
    grid = default_grid(system, args.grid)
    M1 = melnikov_M1(system, grid)
    if system.omega.is_zero():
        warn.append("degenerate perturbation")
        zero = np.zeros(len(grid))
        write_csv(os.path.join(out, "melnikov.csv"), ["s", "re_M1", "im_M1", "f1", "f2", "f3"],
                  [(s, 0.0, 0.0, 0.0, 0.0, 0.0) for s in grid])
        summary["melnikov"] = {"grid": grid, "M1": zero, "degenerate": True}
        return None
    f1, f2 = vanishing_parts(system, grid)
    dec = decompose_log(M1, f1, f2)
    vals = np.asarray(M1.values, complex)
    write_csv(os.path.join(out, "melnikov.csv"), ["s", "re_M1", "im_M1", "f1", "f2", "f3"],
              [(s, m.real, m.imag, a, b, c) for s, m, a, b, c in
               zip(grid, vals, f1.values, f2.values, dec.f3)])
    fits = {"M1": _fit(M1, "M1", warn), "f1": _fit(f1, "f1", warn), "f2": _fit(f2, "f2", warn)}
    fsum = type(f1)("sum", grid, dec.fsum)
    fits["fsum"] = _fit(fsum, "fsum", warn)
    summary["melnikov"] = {
        "grid": grid, "M1": vals.real, "f1": f1.values, "f2": f2.values, "f3": dec.f3,
        "decomposition_curvature_ratio": dec.residual,
        "fits": {k: (v.to_json() if v else None) for k, v in fits.items()},
    }
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.semilogx(grid, vals.real, "o-", label="M1")
    ax.semilogx(grid, dec.f3, "s--", label="f3")
    ax.set_xlabel("s")
    ax.legend()
    _save(fig, os.path.join(out, "melnikov.svg"))
    if all(fits[k] for k in ("M1", "f1", "f2", "fsum")):
        return B.CharacteristicSet(fits["M1"].p, fits["f1"].p, fits["f2"].p, fits["fsum"].p,
                                   "fitted", {k: v.fit_rms for k, v in fits.items()})
    return None


def run_bounds(args, summary, nu):
    if args.nu:
        nu = B.CharacteristicSet(*(Fraction(v) for v in args.nu), "user")
    if nu is None:
        summary["bounds"] = None
        return None
    res = {"characteristic_set": nu.to_json(),
           "bound_two_saddle": B.bound_two_saddle(nu),
           "bound_homoclinic": B.bound_homoclinic(nu.nu_P, nu.nu_d1)}
    if args.pq:
        res["comparison"] = B.compare_bounds(*(Fraction(v) for v in args.pq))
    summary["bounds"] = res
    return nu


def _need_eps(args):
    if args.eps is None or args.eps == 0.0:
        raise ValidationError("this command needs a nonzero --eps", "run")
    return args.eps


def run_dulac(system, args, out, summary):
    from .dulac import CoveringPoint, dulac_map, probe_sector
    eps = 0.0 if args.eps is None else args.eps
    phis = args.phis if args.phis is not None else [0.0, math.pi / 2, math.pi, 3 * math.pi / 2]
    rows = []
    for k, phi in enumerate(phis):
        pair = [dulac_map(system, eps, idx, CoveringPoint(args.radius, phi), keep_path=True)
                for idx in (1, 2)]
        for smp in pair:
            lift = smp.lift.samples
            write_csv(os.path.join(out, f"trajectory_d{smp.saddle_index}_{k}.csv"),
                      ["param", "re_x", "im_x", "re_y", "im_y"],
                      [(p.real, x.real, x.imag, y.real, y.imag) for p, x, y in lift])
        a, b = pair[0].value, pair[1].value
        rows.append((args.radius, phi, a.real, a.imag, b.real, b.imag))
    write_csv(os.path.join(out, "dulac.csv"), ["rho", "phi", "re_d1", "im_d1", "re_d2", "im_d2"], rows)
    table = probe_sector(system, eps, 1, phis)
    summary["dulac"] = {"eps": eps, "rho": args.radius, "values": rows,
                        "sector_radius": [[k, v] for k, v in sorted(table.items())]}


def run_zero_locus(system, args, out, summary):
    from .counting import saddle_values
    from .dulac import trace_zero_locus
    eps = _need_eps(args)
    sv = saddle_values(system, eps)
    curve = trace_zero_locus(system, eps, sv.lo_index, (-args.radius, -args.radius / 10),
                             max(args.grid // 2, 4))
    rows = curve.to_rows()
    write_csv(os.path.join(out, "zero_locus.csv"), ["u", "v_solved", "v_predicted", "residual"], rows)
    summary["zero_locus"] = {"eps": eps, "saddle_index": sv.lo_index, "rows": rows,
                             "gaps": list(curve.gaps), "order": curve.order}
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(curve.samples[:, 0], curve.samples[:, 1], "o-", label="solved")
    ax.plot(curve.samples[:, 0], curve.predicted, "x--", label="predicted")
    ax.set_xlabel("u")
    ax.set_ylabel("v")
    ax.legend()
    _save(fig, os.path.join(out, "zero_locus.svg"))


def run_count(system, args, out, summary, nu):
    from .counting import count_zeros
    eps = _need_eps(args)
    rep = count_zeros(system, eps, args.radius, nu)
    tr = rep.contour
    write_csv(os.path.join(out, "contour.csv"),
              ["re_z", "im_z", "re_disp", "im_disp", "arg_unwrapped"], tr.rows())
    summary["count"] = rep.to_json()
    if rep.bound_exceeded:
        summary.setdefault("findings", []).append(
            f"winding count {rep.winding_count} exceeds the bound {rep.bound} at eps={eps}, R={args.radius}")
    plt = _plt()
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    a1.plot(tr.z.real, tr.z.imag, "-", lw=0.8)
    a1.set_xlabel("Re z")
    a1.set_ylabel("Im z")
    a2.plot(tr.arg, "-")
    a2.set_xlabel("sample")
    a2.set_ylabel("arg (d1 - d2)")
    _save(fig, os.path.join(out, "contour.svg"))


def run(args) -> int:
    command = args.command_flag or args.cmd
    if command is None:
        raise ValidationError("no command given", "run")
    if args.grid < 12:
        raise ValidationError("--grid must be at least 12", "run")
    os.makedirs(args.out, exist_ok=True)
    summary = {"command": command, "seed": args.seed}
    warn: list = []
    if command == "bounds":
        if not args.nu:
            raise ValidationError("bounds needs --nu", "run")
        run_bounds(args, summary, None)
    else:
        system = load(args)
        loop = system.loop
        summary["loop"] = {"saddle1": loop.saddle1.location, "saddle2": loop.saddle2.location,
                           "center": loop.center.location, "annulus_sign": loop.annulus_sign,
                           "annulus_range": loop.annulus_range}
        if command in ("analyze", "melnikov"):
            nu = run_melnikov(system, args, args.out, summary, warn)
            nu = run_bounds(args, summary, nu)
            if command == "analyze" and args.eps:
                run_zero_locus(system, args, args.out, summary)
                run_count(system, args, args.out, summary, nu)
        elif command == "dulac":
            run_dulac(system, args, args.out, summary)
        elif command == "zero-locus":
            run_zero_locus(system, args, args.out, summary)
        elif command == "count":
            run_count(system, args, args.out, summary, _user_nu(args))
    summary["warnings"] = warn
    for w in warn:
        print(f"warning: {w}", file=sys.stderr)
    write_json(os.path.join(args.out, "summary.json"), summary)
    return 0


def _user_nu(args):
    return B.CharacteristicSet(*(Fraction(v) for v in args.nu), "user") if args.nu else None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except TwoLoopError as exc:
        err = {"error": type(exc).__name__, "operation": exc.operation or "run",
               "message": str(exc), "exit_code": exc.exit_code}
        print(json.dumps(err, sort_keys=True))
        try:
            os.makedirs(args.out, exist_ok=True)
            write_json(os.path.join(args.out, "error.json"), err)
        except OSError:
            pass
        return exc.exit_code
    except (ValueError, ArithmeticError) as exc:
        err = {"error": type(exc).__name__, "operation": "run", "message": str(exc),
               "exit_code": 2 if isinstance(exc, ValueError) else 3}
        print(json.dumps(err, sort_keys=True))
        return err["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
