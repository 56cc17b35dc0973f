"""Command-line interface.

    toricma <subcommand> --config <file> [--out <dir>] [--seed <u64>] [--parallel]

Subcommands: solve-envelope, solve-ma, solve-constrained, harmonic-lift,
capacity, make-boundary, run.  Problem files are key = value text with
sections; outputs land under --out with a checksum manifest where
applicable.  Exit codes: 0 success/PASS, 1 a check FAILed, 2 usage or
module error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import numpy as np

from .capacity import CompactRegion, calibrate_class_constant, capacity, class_F_check, h_fn
from .cantor import (
    MultiCircularSet,
    jordan_through_dust,
    region_to_multicircular,
    surface_measure,
    svc_dust_2d,
)
from .envelopes import envelope_with_density, ma_dirichlet, p_envelope
from .experiments import (
    BOUNDARY_BUILDERS,
    DENSITY_BUILDERS,
    ExperimentConfig,
    _parse_scalar,
    run_experiment,
)
from .geometry import ReinhardtDomainSpec, build_log_grid
from .gridio import save_grid_file
from .harmonic import harmonic_lift

__all__ = ["main"]


def _read_sections(path) -> dict:
    cp = configparser.ConfigParser()
    with open(path) as fh:
        cp.read_string(fh.read())
    return {sec: {k: _parse_scalar(v) for k, v in cp.items(sec)} for sec in cp.sections()}


def _grid_from(sections):
    dom = sections.get("domain", {})
    spec = ReinhardtDomainSpec(
        kind=str(dom.get("kind", "UnitBall")),
        n=int(dom.get("n", 2)),
        L=float(dom.get("L", 4.0)),
        h=float(dom.get("h", 1.0 / 16.0)),
    )
    return build_log_grid(spec)


def _boundary_from(sections, grid):
    params = sections.get("boundary", {"builder": "constant", "value": 0.0})
    name = str(params.get("builder", "constant"))
    if name not in BOUNDARY_BUILDERS:
        raise ValueError(f"unknown boundary builder {name!r}")
    return BOUNDARY_BUILDERS[name](params, grid)


def _density_from(sections, grid):
    params = sections.get("density", {"builder": "zero"})
    name = str(params.get("builder", "zero"))
    if name not in DENSITY_BUILDERS:
        raise ValueError(f"unknown density builder {name!r}")
    return DENSITY_BUILDERS[name](params, grid)


def _obstacle_from(sections):
    params = sections.get("obstacle")
    if not params:
        return None
    name = str(params.get("builder", "constant"))
    if name == "constant":
        return float(params.get("value", 0.0))
    if name == "annulus":
        lo = float(params.get("r_in", math.exp(-1.5))) ** 2
        hi = float(params.get("r_out", math.exp(-1.0))) ** 2
        inside_value = float(params.get("value", -1.0))

        def fn(x):
            s = np.exp(2.0 * np.asarray(x)).sum(axis=-1)
            return np.where((s >= lo) & (s <= hi), inside_value, 0.0)

        return fn
    raise ValueError(f"unknown obstacle builder {name!r}")


def _solver_kwargs(sections):
    params = sections.get("solver", {})
    kw = {}
    if "tol" in params:
        kw["tol"] = float(params["tol"])
    if "mode" in params:
        kw["mode"] = str(params["mode"])
    if "max_outer" in params:
        kw["max_outer"] = int(params["max_outer"])
    return kw


def _write_solve_outputs(out_dir, name, fn, report, sections) -> None:
    os.makedirs(out_dir, exist_ok=True)
    save_grid_file(os.path.join(out_dir, "solution.grid"), fn)
    lines = [f"SOLVE {name}"]
    for sec in sorted(sections):
        for k in sorted(sections[sec]):
            lines.append(f"  {sec}.{k} = {sections[sec][k]}")
    lines.append(str(report))
    with open(os.path.join(out_dir, "solve-report.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _cmd_solve(args, which: str) -> int:
    sections = _read_sections(args.config)
    grid = _grid_from(sections)
    boundary = _boundary_from(sections, grid)
    kw = _solver_kwargs(sections)
    if which == "solve-envelope":
        fn, report = p_envelope(grid, boundary, _obstacle_from(sections), **kw)
    elif which == "solve-ma":
        fn, report = ma_dirichlet(grid, boundary, _density_from(sections, grid), **kw)
    else:
        fn, report = envelope_with_density(
            grid, boundary, _density_from(sections, grid), _obstacle_from(sections), **kw
        )
    _write_solve_outputs(args.out, which, fn, report, sections)
    print(report)
    return 0 if report.converged else 1


def _cmd_harmonic(args) -> int:
    sections = _read_sections(args.config)
    dom = sections.get("domain", {})
    bnd = sections.get("boundary", {"value": 0.0})
    fn = harmonic_lift(
        str(dom.get("kind", "UnitBall")),
        int(dom.get("n", 2)),
        float(bnd.get("value", 0.0)),
        subdivisions=int(dom.get("subdivisions", 64)),
    )
    os.makedirs(args.out, exist_ok=True)
    save_grid_file(os.path.join(args.out, "lift.grid"), fn)
    print(f"harmonic lift written ({fn.grid.size} nodes)")
    return 0


def _parse_compact(grid, text: str) -> CompactRegion:
    toks = text.replace(",", " ").split()
    kind = toks[0]
    if kind == "ball":
        return CompactRegion.subball(grid, float(toks[1]))
    if kind == "annulus":
        return CompactRegion.annulus(grid, float(toks[1]), float(toks[2]))
    if kind == "box":
        vals = [float(t) for t in toks[1:]]
        n = grid.spec.n
        if len(vals) != 2 * n:
            raise ValueError(f"box descriptor needs {2 * n} coordinates, got {len(vals)}")
        return CompactRegion.box(grid, vals[:n], vals[n:])
    raise ValueError(f"unknown compact descriptor {text!r} (ball/annulus/box)")


def _cmd_capacity(args) -> int:
    sections = _read_sections(args.config) if args.config else {}
    grid = _grid_from(sections)
    n = grid.spec.n

    descriptors = list(args.compact or [])
    conf = sections.get("capacity", {})
    if "compacts" in conf:
        descriptors.extend(
            ln.strip() for ln in str(conf["compacts"]).splitlines() if ln.strip()
        )
    if not descriptors and not args.scaling_test:
        raise ValueError("no compacts given (use --compact or a [capacity] section)")

    density = _density_from(sections, grid)
    A = float(conf.get("A", 1.0))
    compacts = [_parse_compact(grid, d) for d in descriptors]

    failed = False
    rows = []
    caps = [capacity(K) for K in compacts]
    if args.class_check and compacts:
        if density is None:
            raise ValueError("--class-check needs a [density] section")
        base = calibrate_class_constant(density, compacts, capacities=caps)
        A = max(A, base * 1.1)
        report = class_F_check(density, A, compacts, capacities=caps)
        for (label, mu, cap, bound, ok), K in zip(report.rows, compacts):
            rows.append((label, mu, cap, bound, (mu / bound) if bound > 0 else 0.0))
            failed |= not ok
        print(report)
    else:
        from .capacity import _mu_of

        for K, cap in zip(compacts, caps):
            mu = _mu_of(density, K) if density is not None else 0.0
            bound = A * cap / h_fn(cap ** (-1.0 / n), n) if cap > 0 else 0.0
            ratio = mu / bound if bound > 0 else 0.0
            rows.append((K.label, mu, cap, bound, ratio))

    if args.scaling_test:
        cap1 = capacity(CompactRegion.subball(grid, math.exp(-1.0)))
        cap2 = capacity(CompactRegion.subball(grid, math.exp(-2.0)))
        ratio = cap2 / cap1 if cap1 else math.inf
        target = 2.0 ** (-n)
        rel = abs(ratio / target - 1.0)
        ok = rel <= float(conf.get("scaling_rel", 0.05))
        print(f"scaling: cap(e^-2)/cap(e^-1) = {ratio:.6g} target {target:.6g} "
              f"rel-err {rel:.3g} -> {'PASS' if ok else 'FAIL'}")
        failed |= not ok

    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "capacity.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["descriptor", "mass", "capacity", "bound", "ratio"])
        for label, mu, cap, bound, ratio in rows:
            writer.writerow([label, f"{mu:.12g}", f"{cap:.12g}", f"{bound:.12g}", f"{ratio:.12g}"])
    print(f"wrote {csv_path} ({len(rows)} rows)")
    return 1 if failed else 0


def _admissible_box(delta_ax: float):
    """A rectangle in the (a, b) square clearing the axis margins for delta_ax."""
    if delta_ax > 0.016:
        raise ValueError("axis margin too large; need delta_ax <= 0.016 for the stock box")
    a0 = 0.2 * delta_ax if delta_ax > 0 else 0.001
    b0 = 0.4 * delta_ax if delta_ax > 0 else 0.002
    b1 = min(0.9999, (1.0 - delta_ax**2) ** 2 * (1.0 - 5e-5))
    return (Fraction(a0).limit_denominator(10**6), Fraction(1) - Fraction(a0).limit_denominator(10**6)), (
        Fraction(b0).limit_denominator(10**6),
        Fraction(b1).limit_denominator(10**6),
    )


def _cmd_make_boundary(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    delta_ax = args.delta_ax
    report_lines = []
    ok = True

    if args.band:
        a, b = (float(t) for t in args.band.split(","))
        A = MultiCircularSet.from_intervals([(a, b)], delta_ax=delta_ax)
        est = surface_measure(A, samples=args.samples, seed=args.seed or 0)
        with open(os.path.join(args.out, "band.txt"), "w") as fh:
            fh.write(f"BAND n=2 delta_ax={delta_ax}\n{a!r} {b!r}\n")
        exact = A.measure
        report_lines += [
            f"band ({a}, {b}) in m = r_2^2",
            f"exact measure = {exact:.12g}",
            f"qmc measure   = {est.value:.12g} +- {est.stderr:.3g} ({est.samples} samples)",
        ]
    elif args.svc:
        eps_s, depth_s = args.svc.split(",")
        eps, depth = Fraction(eps_s), int(depth_s)
        box = _admissible_box(delta_ax)
        dust = svc_dust_2d(eps, depth, box)
        curve = jordan_through_dust(dust)
        A = region_to_multicircular(curve, delta_ax, 3)
        est = surface_measure(A, samples=args.samples, seed=args.seed or 0)
        poly_path = os.path.join(args.out, "polygon.txt")
        with open(poly_path, "w") as fh:
            fh.write(f"POLYGON n=3 delta_ax={delta_ax} vertices={len(curve)}\n")
            for vx, vy in curve.vertices:
                fh.write(f"{vx} {vy}\n")
        exact = A.measure
        total = A.total_sphere_measure
        complement = 1.0 - exact / total
        report_lines += [
            f"svc dust eps={eps} depth={depth}, box={box}",
            f"curve: {len(curve)} vertices, simple",
            f"exact measure = {exact:.12g} of {total:.12g} (complement {complement:.4%})",
            f"qmc measure   = {est.value:.12g} +- {est.stderr:.3g} ({est.samples} samples)",
        ]
        if args.target_complement is not None:
            ok = complement <= args.target_complement
            report_lines.append(
                f"target complement <= {args.target_complement:.4%} -> "
                f"{'PASS' if ok else 'FAIL'}"
            )
    else:
        raise ValueError("make-boundary needs --band a,b or --svc eps,depth")

    with open(os.path.join(args.out, "measure-report.txt"), "w") as fh:
        fh.write("\n".join(report_lines) + "\n")
    print("\n".join(report_lines))
    return 0 if ok else 1


def _cmd_run(args) -> int:
    # the id field may name several experiments; split before validating so
    # each one is checked against the registry individually
    id_text = str(_read_sections(args.config).get("experiment", {}).get("id", ""))
    ids = [t.strip() for t in id_text.split(",") if t.strip()]
    if not ids:
        raise ValueError(f"{args.config}: [experiment] section has no id to run")

    def one(exp_id: str):
        cfg = ExperimentConfig.from_file(args.config, experiment=exp_id)
        if args.seed is not None:
            cfg.seed = args.seed
        dest = os.path.join(args.out, exp_id) if len(ids) > 1 else args.out
        return run_experiment(cfg, out_dir=dest)

    if args.parallel and len(ids) > 1:
        with ThreadPoolExecutor(max_workers=min(len(ids), 4)) as pool:
            reports = list(pool.map(one, ids))
    else:
        reports = [one(i) for i in ids]

    for rep in reports:
        print(rep.body_text())
    return 0 if all(r.passed for r in reports) else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="toricma",
        description="Toric Monge-Ampere envelopes, capacities, and experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="problem description file")
        p.add_argument("--out", default="toricma-out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--parallel", action="store_true", help="run independent work concurrently")

    for name in ("solve-envelope", "solve-ma", "solve-constrained"):
        common(sub.add_parser(name, help=f"{name} from a problem file"))
    common(sub.add_parser("harmonic-lift", help="torus-invariant harmonic extension"))

    cap = sub.add_parser("capacity", help="relative capacities of compact families")
    common(cap, config_required=False)
    cap.add_argument("--compact", action="append", help="descriptor: 'ball r' | 'annulus rin rout' | 'box lo.. hi..'")
    cap.add_argument("--scaling-test", action="store_true", help="check cap scaling under radius squaring")
    cap.add_argument("--class-check", action="store_true", help="mass-vs-capacity class inclusion check")

    mk = sub.add_parser("make-boundary", help="construct multi-circular boundary sets")
    common(mk, config_required=False)
    mk.add_argument("--band", help="n=2 band: a,b in the m = r_2^2 parameter")
    mk.add_argument("--svc", help="n=3 fat-Cantor region: eps,depth")
    mk.add_argument("--delta-ax", type=float, default=0.05, dest="delta_ax", help="axis margin")
    mk.add_argument("--target-complement", type=float, default=None, help="required complement fraction")
    mk.add_argument("--samples", type=int, default=1 << 18, help="QMC sample count")

    common(sub.add_parser("run", help="run registered experiments"))

    args = parser.parse_args(argv)
    try:
        if args.command in ("solve-envelope", "solve-ma", "solve-constrained"):
            return _cmd_solve(args, args.command)
        if args.command == "harmonic-lift":
            return _cmd_harmonic(args)
        if args.command == "capacity":
            return _cmd_capacity(args)
        if args.command == "make-boundary":
            return _cmd_make_boundary(args)
        if args.command == "run":
            return _cmd_run(args)
        parser.error(f"unhandled command {args.command}")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary: report and exit 2
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
