"""Command-line front end.

    qbattery simulate --config drive.json --t-max 5 --dt 1e-3 --out trace.csv
    qbattery analytic --mode optimal --k 1
    qbattery floquet  --config drive.json --nmax 30 --out quasi.csv
    qbattery sweep    --config sweep.json --out map.csv
    qbattery optimize --config sweep.json --threshold 0.4 --out candidates.csv

Exit codes: 0 success, 1 input error, 2 numerical or model error.
Every command that writes files also writes ``<out stem>.manifest.json``.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analytic import (
    chrwa_solve_xi,
    eta_chrwa,
    eta_circular,
    eta_parallel,
    optimal_chrwa_params,
)
from .drive_model import DriveConfig, common_base_frequency, fourier_components
from .errors import QBatteryError
from .floquet import DEFAULT_NMAX, decompose, eta_floquet, initial_coefficients
from .propagator import DEFAULT_TOL, SaturationTrace, default_dt, evolve
from .spin_algebra import build_operators, uncharged_state
from .sweep import (
    DEFAULT_TILT,
    SaturationMap,
    SweepSpec,
    check_base,
    evaluate_candidates,
    pick_best,
    sweep_row,
)

logger = logging.getLogger(__name__)


class InputError(Exception):
    """Bad flags, unreadable files or invalid configs (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _load_json(path: str, stage: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"[{stage}] cannot read {path}: {exc}") from exc


def _load_config(path: str) -> DriveConfig:
    data = _load_json(path, "config")
    try:
        return DriveConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise InputError(f"[config] invalid drive config {path}: {exc}") from exc


def _sibling(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


def _write(path: Path, text: str, written: list):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    written.append(str(path))


def _write_manifest(out: Path, manifest: dict, started: float, written: list):
    manifest["outputs"] = list(written)
    manifest["version"] = __version__
    manifest["wall_clock_s"] = round(time.perf_counter() - started, 3)
    path = _sibling(out, ".manifest.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _emit(text: str, out: Path | None, written: list):
    if out is None:
        sys.stdout.write(text)
    else:
        _write(out, text, written)


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    config = _load_config(args.config)
    dt = args.dt if args.dt is not None else default_dt(config)
    try:
        trace = evolve(config, args.t_max, dt, tol=args.tol)
    except ValueError as exc:
        raise InputError(f"[simulate] {exc}") from exc
    out = Path(args.out) if args.out else None
    written: list = []
    _emit(trace.to_csv(), out, written)
    if out is not None:
        _write_manifest(out, {
            "command": "simulate", "config_path": args.config, "config": config.to_dict(),
            "settings": {"t_max": args.t_max, "dt": dt, "tol": args.tol},
            "renormalized": trace.renormalized,
        }, started, written)
    return 0


def _analytic_curve(times, mode, args):
    if mode == "parallel":
        return eta_parallel(times)
    if mode == "circular":
        return eta_circular(args.A, args.w, args.w0, times)
    params = chrwa_solve_xi(args.A, args.w, args.w0)
    return eta_chrwa(args.A, args.w, args.w0, times, params=params)


def cmd_analytic(args) -> int:
    started = time.perf_counter()
    out = Path(args.out) if args.out else None
    written: list = []
    if args.mode == "optimal":
        opt = optimal_chrwa_params(args.w0, args.k)
        text = json.dumps({
            "k": opt.k, "z": opt.z_root, "A": opt.a_opt,
            "omega": opt.omega_opt, "t_min": opt.t_min,
        }, indent=2, sort_keys=True) + "\n"
    else:
        if args.mode in ("circular", "chrwa") and (args.A is None or args.w is None):
            raise InputError(f"[analytic] --mode {args.mode} needs --A and --w")
        step = args.dt if args.dt is not None else 0.01
        n = max(1, math.ceil(args.t_max / step - 1e-9))
        times = np.linspace(0.0, args.t_max, n + 1)
        try:
            eta = _analytic_curve(times, args.mode, args)
        except ValueError as exc:
            raise InputError(f"[analytic] {exc}") from exc
        text = "t,eta\n" + "".join(f"{t:.12g},{e:.12g}\n" for t, e in zip(times, eta))
    _emit(text, out, written)
    if out is not None:
        _write_manifest(out, {
            "command": "analytic", "config_path": None,
            "settings": {k: getattr(args, k) for k in ("mode", "A", "w", "w0", "k", "t_max", "dt")},
        }, started, written)
    return 0


def _floquet_base(config: DriveConfig):
    try:
        return common_base_frequency(config)
    except ValueError:
        if config.active_axes() and any(config.frequency(a) > 0 for a in config.active_axes()):
            raise
        # static field: any period works; use the bare level splitting
        return config.omega0, (0, 0, 0)


def cmd_floquet(args) -> int:
    started = time.perf_counter()
    config = _load_config(args.config)
    if not args.out:
        raise InputError("[floquet] --out is required")
    out = Path(args.out)
    ops = build_operators(config.n_units)
    base, mult = _floquet_base(config)
    components = fourier_components(config, ops, base, mult)
    period = 2 * math.pi / base
    t_max = args.t_max if args.t_max is not None else 5 * period
    # the reference trace needs to sit well below the 1e-4 comparison scale
    dt = args.dt if args.dt is not None else default_dt(config) / 10
    try:
        numeric = evolve(config, t_max, dt)
    except ValueError as exc:
        raise InputError(f"[floquet] {exc}") from exc
    decomp = decompose(components, args.nmax, ops)
    eta_f = eta_floquet(decomp, numeric.times)
    floquet_trace = SaturationTrace(
        numeric.times, eta_f, config.n_units * config.omega0 * eta_f, config.config_hash
    )
    ladder = sorted({max(components.max_harmonic, args.nmax * k // 4) for k in (1, 2, 4)})
    by_nmax = {}
    for n_max in ladder:
        dev = np.max(np.abs(eta_floquet(decompose(components, n_max, ops), numeric.times) - numeric.eta))
        by_nmax[str(n_max)] = float(dev)
    psi0 = uncharged_state(config.n_units)
    coeffs = initial_coefficients(decomp, psi0)
    residual = np.max(np.abs(decomp.mode_matrix() @ coeffs - psi0.amplitudes))
    report = {
        "base_frequency": base,
        "multipliers": list(mult),
        "n_max": args.nmax,
        "max_deviation": float(np.max(np.abs(eta_f - numeric.eta))),
        "deviation_by_nmax": by_nmax,
        "mode_matrix_condition": float(np.linalg.cond(decomp.mode_matrix())),
        "reconstruction_residual": float(residual),
    }
    written: list = []
    _write(out, decomp.to_csv(), written)
    _write(_sibling(out, ".floquet.csv"), floquet_trace.to_csv(), written)
    _write(_sibling(out, ".numeric.csv"), numeric.to_csv(), written)
    _write(_sibling(out, ".convergence.json"),
           json.dumps(report, indent=2, sort_keys=True) + "\n", written)
    _write_manifest(out, {
        "command": "floquet", "config_path": args.config, "config": config.to_dict(),
        "settings": {"n_max": args.nmax, "t_max": t_max, "dt": dt},
    }, started, written)
    print(f"max |eta_floquet - eta_numeric| = {report['max_deviation']:.3e}")
    return 0


def _load_spec(path: str) -> SweepSpec:
    data = _load_json(path, "spec")
    try:
        return SweepSpec.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"[spec] invalid sweep spec {path}: {exc}") from exc


def cmd_sweep(args) -> int:
    started = time.perf_counter()
    spec = _load_spec(args.config)
    if not args.out:
        raise InputError("[sweep] --out is required")
    out = Path(args.out)
    rows, failures = [], []
    for i, p in enumerate(spec.param_grid):
        try:
            rows.append(sweep_row(spec, i, args.dt, args.tol))
        except (QBatteryError, ValueError) as exc:
            failures.append({"row": i, "param": float(p), "error": f"{type(exc).__name__}: {exc}"})
            rows.append(np.full(len(spec.t_grid), np.nan))
    smap = SaturationMap(spec, np.vstack(rows))
    written: list = []
    if len(failures) < len(rows):
        _write(out, smap.to_csv(), written)
        _write(_sibling(out, ".spec.json"), smap.sidecar_json(), written)
    _write_manifest(out, {
        "command": "sweep", "config_path": args.config, "spec": spec.to_dict(),
        "settings": {"dt": args.dt, "tol": args.tol}, "failures": failures,
    }, started, written)
    for f in failures:
        print(f"row {f['row']} (p={f['param']:g}) failed: {f['error']}", file=sys.stderr)
    return 0 if len(failures) < len(rows) else 2


def _optimize_plan(data: dict):
    """Accept a sweep spec or {families: [...], param_grids: {...}, base, t_grid}."""
    base = DriveConfig.from_dict(data["base"])
    check_base(base)
    t_grid = np.asarray(data["t_grid"], dtype=float)
    if t_grid.size == 0:
        raise ValueError("t_grid is empty")
    if "families" in data:
        families = list(data["families"])
        grids = {f: list(data["param_grids"][f]) for f in families}
    else:
        families = [data["family"]]
        grids = {data["family"]: list(data["param_grid"])}
    for family, grid in grids.items():
        if not grid:
            raise ValueError(f"empty param grid for {family}")
    return base, families, grids, float(t_grid[-1]), float(data.get("theta", DEFAULT_TILT))


def cmd_optimize(args) -> int:
    started = time.perf_counter()
    data = _load_json(args.config, "spec")
    if not args.out:
        raise InputError("[optimize] --out is required")
    if args.threshold is None:
        raise InputError("[optimize] --threshold is required")
    try:
        base, families, grids, t_final, theta = _optimize_plan(data)
        candidates = evaluate_candidates(
            args.threshold, base, families, grids, t_final, args.dt, args.atol, theta
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"[optimize] {exc}") from exc
    best = pick_best(candidates)
    out = Path(args.out)
    lines = ["family,param,time"]
    for family, p, t in candidates:
        lines.append(f"{family},{p:.12g},{'' if t is None else format(t, '.12g')}")
    written: list = []
    _write(out, "\n".join(lines) + "\n", written)
    winner = None if best is None else {"family": best.family, "p": best.p, "time": best.time}
    _write(_sibling(out, ".winner.json"), json.dumps(winner, indent=2, sort_keys=True) + "\n", written)
    _write_manifest(out, {
        "command": "optimize", "config_path": args.config, "spec": data,
        "settings": {"dt": args.dt, "threshold": args.threshold, "atol": args.atol},
    }, started, written)
    if best is None:
        print("no candidate reached the threshold", file=sys.stderr)
        return 2
    print(json.dumps(winner, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qbattery", description="Harmonically driven quantum battery charging.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--dt", type=float, default=None)
        p.add_argument("--out", metavar="PATH", default=None)
        p.add_argument("--seedless", action="store_true",
                       help="reserved; nothing here draws random numbers")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("simulate", help="direct integration from the uncharged state")
    common(p)
    p.add_argument("--t-max", type=float, default=10.0)
    p.add_argument("--tol", type=float, default=None, nargs="?", const=DEFAULT_TOL,
                   help="fail with exit 2 if dt/4 moves the final eta by more than this")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analytic", help="closed-form charging curves")
    common(p, config=False)
    p.add_argument("--mode", required=True, choices=("parallel", "circular", "chrwa", "optimal"))
    p.add_argument("--A", type=float, default=None)
    p.add_argument("--w", type=float, default=None)
    p.add_argument("--w0", type=float, default=1.0)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--t-max", type=float, default=10.0)
    p.set_defaults(func=cmd_analytic)

    p = sub.add_parser("floquet", help="Floquet reconstruction checked against integration")
    common(p)
    p.add_argument("--nmax", type=int, default=DEFAULT_NMAX)
    p.add_argument("--t-max", type=float, default=None)
    p.set_defaults(func=cmd_floquet)

    p = sub.add_parser("sweep", help="saturation map over one parameter family")
    common(p)
    p.add_argument("--tol", type=float, default=None, nargs="?", const=DEFAULT_TOL)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize", help="earliest time to a saturation threshold")
    common(p)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--atol", type=float, default=0.0,
                   help="count eta >= threshold - atol as reached")
    p.set_defaults(func=cmd_optimize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 1
    except QBatteryError as exc:
        print(f"error [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
