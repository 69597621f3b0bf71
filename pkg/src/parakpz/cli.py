"""Command-line orchestration: subcommands, artifact persistence, verify suites.

Every subcommand writes its outputs under ``--out`` together with a
reproducibility manifest (full configuration, seeds, code version).  Outputs
carry no timestamps, so identical invocations produce byte-identical
directories.  Exit codes: 0 success, 2 verification failure, 1 error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import Config, ConfigError, emit_config, load_config, check
from .spectral import (Grid, GridField, make_dyadic_partition, read_field,
                       spectral_derivative, write_field)
from .spaces import TimeField, read_timefield, write_timefield
from .paraproducts import para_lower, para_upper, resonant
from .heat import heat_propagate
from .noise import (build_trees, load_enhanced, mollify, renorm_constants,
                    sample_noise, save_enhanced, stationary_initial,
                    zero_enhanced)
from .equations import solve_rhe
from .kpz import solve_kpz
from .polymer import sample_polymer, transition_kernel

SCHEMA_VERSION = 1

__all__ = ["main", "run_subcommand", "worker_count", "SCHEMA_VERSION"]


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def worker_count() -> int:
    """Worker cap: PARAKPZ_THREADS if set, else the CPU count."""
    avail = os.cpu_count() or 1
    raw = os.environ.get("PARAKPZ_THREADS")
    if raw is None:
        return avail
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"PARAKPZ_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ValueError("PARAKPZ_THREADS must be >= 1")
    return min(n, avail)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_json(path: Path, payload: dict) -> None:
    body = {"schema_version": SCHEMA_VERSION}
    body.update(_jsonable(payload))
    path.write_text(json.dumps(body, indent=1, sort_keys=True) + "\n")


def _write_manifest(out: Path, command: str, cfg: Config, args,
                    extra: dict | None = None) -> None:
    manifest = {
        "tool": "parakpz",
        "code_version": __version__,
        "command": command,
        "arguments": {k: _jsonable(v) for k, v in sorted(vars(args).items())
                      if k not in ("func", "out")},
        "config": {k.strip(): v.strip() for k, v in
                   (line.split("=", 1) for line in
                    emit_config(cfg).strip().splitlines())},
    }
    manifest.update(extra or {})
    _write_json(out / "run_manifest.json", manifest)


def _load_cfg(args) -> Config:
    cfg = load_config(path=getattr(args, "config", None))
    overrides = {}
    for key in ("num_points", "dt", "horizon", "seed", "tol"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if overrides:
        from dataclasses import replace
        cfg = replace(cfg, **overrides)
        check(cfg)
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_snapshot_csv(path: Path, x: np.ndarray, vals: np.ndarray,
                        colname: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"x,{colname}\n")
        for xi, vi in zip(x, vals):
            fh.write(f"{xi:.17g},{vi:.17g}\n")


def _snap_index(mesh: np.ndarray, t: float) -> int:
    i = int(np.argmin(np.abs(mesh - t)))
    if abs(mesh[i] - t) > 1e-9 + 1e-6 * max(1.0, abs(t)):
        raise ValueError(f"time {t} not on the solution mesh "
                         f"(nearest node {mesh[i]})")
    return i


def _parse_times(raw: str) -> list[float]:
    try:
        times = [float(p) for p in raw.split(",") if p.strip()]
    except ValueError as exc:
        raise ValueError(f"bad --times value {raw!r}: {exc}") from exc
    if not times:
        raise ValueError("--times must list at least one time")
    return times


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_enhance(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    level = float(args.n)
    grid = Grid(cfg.num_points, cfg.half_length)
    c_lr, c_dbl = renorm_constants(level, grid, cfg.dt)
    xi = mollify(sample_noise(grid, cfg.horizon, cfg.dt, args.seed), level)
    y0 = stationary_initial(grid, cfg.dt, level, args.seed)
    data = build_trees(xi, y0, c_lr, c_dbl, seed=args.seed,
                       init_kind="stationary",
                       params={"alpha": cfg.alpha, "delta": cfg.delta,
                               "a": cfg.a})
    save_enhanced(data, out / "data")
    _write_manifest(out, "enhance", cfg, args,
                    {"seeds": {"noise": args.seed},
                     "constants": {"c_lr": c_lr, "c_dbl": c_dbl}})
    print(f"enhanced data (level {level:g}, seed {args.seed}) "
          f"written to {out / 'data'}")
    return 0


def _cmd_solve_she(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    data = load_enhanced(args.data)
    w0, _ = read_field(args.w0)
    if w0.grid != data.grid:
        raise ValueError("initial condition grid does not match the data grid")
    pf, report = solve_rhe(data, w0, tol=cfg.tol)
    write_timefield(pf.u, out / "w.tf")
    _write_snapshot_csv(out / "w_final.csv", data.grid.points,
                        np.real(pf.u.frames[-1]), "w")
    _write_json(out / "report.json", {"solve": report.as_dict()})
    _write_manifest(out, "solve-she", cfg, args,
                    {"seeds": {"data": data.seed}})
    print(f"multiplicative heat solve complete; residual "
          f"{report.residual:.3e}, outputs in {out}")
    return 0


def _cmd_solve_kpz(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    data = load_enhanced(args.data)
    hbar, _ = read_field(args.hbar)
    if hbar.grid != data.grid:
        raise ValueError("initial condition grid does not match the data grid")
    res = solve_kpz(data, hbar, tol=cfg.tol)
    times = _parse_times(args.times) if args.times else [float(data.mesh[-1])]
    for t in times:
        i = _snap_index(data.mesh, t)
        _write_snapshot_csv(out / f"h_t{t:g}.csv", data.grid.points,
                            np.real(res.h.frames[i]), "h")
    write_timefield(res.h, out / "h.tf")
    _write_json(out / "certificate.json", {"certificate": res.certificate})
    _write_manifest(out, "solve-kpz", cfg, args,
                    {"seeds": {"data": data.seed}})
    print(f"KPZ solve complete; {len(times)} snapshot(s) in {out}")
    return 0


def _cmd_polymer(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    data = load_enhanced(args.data)
    h = read_timefield(Path(args.h) / "h.tf")
    times = sorted(_parse_times(args.times))
    if times[0] > 1e-12:
        times = [0.0] + times
    pairs = list(zip(times[:-1], times[1:]))

    def build(pair):
        s, t = pair
        return transition_kernel(data, h, s, t, stride=args.stride,
                                 tol=cfg.tol)

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        kernels = list(pool.map(build, pairs))

    for i, k in enumerate(kernels):
        np.save(out / f"kernel_{i}.npy", k.matrix)
        _write_json(out / f"kernel_{i}.json", {
            "s": k.s, "t": k.t, "stride": k.stride, "sigma0": k.sigma0,
            "spacing": k.spacing, "residual": k.residual,
            "num_points": len(k.points), "matrix_file": f"kernel_{i}.npy",
        })

    paths = sample_polymer(kernels, args.x0, args.paths, args.seed)
    with open(out / "paths.csv", "w") as fh:
        fh.write("path,time,position\n")
        for p_idx, p in enumerate(paths):
            for t, x in zip(p.times, p.positions):
                fh.write(f"{p_idx},{t:.17g},{x:.17g}\n")

    _write_json(out / "report.json", {
        "times": times, "n_paths": args.paths, "x0": args.x0,
        "residuals": [k.residual for k in kernels],
    })
    _write_manifest(out, "polymer", cfg, args,
                    {"seeds": {"data": data.seed, "paths": args.seed}})
    print(f"{len(kernels)} kernel(s) and {args.paths} path(s) written to {out}")
    return 0


def _cmd_info(args) -> int:
    print(f"parakpz {__version__}")
    print("subcommands: enhance, solve-she, solve-kpz, polymer, verify, info")
    print(f"verify suites: {', '.join(sorted(_SUITES))}")
    print(f"workers: {worker_count()}")
    print("default configuration:")
    for line in emit_config(Config()).strip().splitlines():
        print(f"  {line}")
    return 0


# ---------------------------------------------------------------------------
# verify suites (hermetic, deterministic)
# ---------------------------------------------------------------------------

def _suite_config() -> list[tuple[str, bool, str]]:
    checks = []
    cfg = load_config(text="")
    ok = (cfg.alpha, cfg.delta, cfg.a, cfg.eps) == (0.45, 0.9, 0.03, 0.32)
    checks.append(("defaults", ok, f"alpha={cfg.alpha} delta={cfg.delta} "
                   f"a={cfg.a} eps={cfg.eps}"))
    rt = load_config(text=emit_config(cfg))
    checks.append(("round_trip", rt == cfg, "load(emit(config)) == config"))
    try:
        load_config(text="alpha = 0.6")
        checks.append(("exponent_window", False, "alpha=0.6 accepted"))
    except ConfigError as exc:
        checks.append(("exponent_window", True,
                       f"alpha=0.6 rejected ({len(exc.errors)} violations)"))
    return checks


def _suite_spectral() -> list[tuple[str, bool, str]]:
    checks = []
    grid = Grid(128, np.pi)
    rng = np.random.default_rng(0)
    f = GridField(grid, values=rng.standard_normal(128) + 0j)
    err = float(np.max(np.abs(grid.to_values(grid.to_coeffs(f.values))
                              - f.values)))
    checks.append(("fft_round_trip", err < 1e-12, f"max error {err:.3e}"))
    s = GridField(grid, values=np.sin(3.0 * grid.points) + 0j)
    d = spectral_derivative(s)
    err = float(np.max(np.abs(d.values - 3.0 * np.cos(3.0 * grid.points))))
    checks.append(("derivative_exact_mode", err < 1e-10, f"max error {err:.3e}"))
    part = make_dyadic_partition(grid)
    total = np.zeros(128, dtype=complex)
    for j in range(-1, part.j_max + 1):
        total += part.window(j) * f.coeffs
    err = float(np.max(np.abs(grid.to_values(total) - f.values)))
    checks.append(("partition_of_unity", err < 1e-12, f"max error {err:.3e}"))
    return checks


def _suite_paraproducts() -> list[tuple[str, bool, str]]:
    checks = []
    grid = Grid(128, np.pi)
    part = make_dyadic_partition(grid)
    rng = np.random.default_rng(1)
    f = GridField(grid, values=rng.standard_normal(128) + 0j)
    g = GridField(grid, values=rng.standard_normal(128) + 0j)
    bony = (para_lower(f, g, part).values + para_upper(f, g, part).values
            + resonant(f, g, part).values)
    err = float(np.max(np.abs(bony - f.values * g.values)))
    checks.append(("bony_decomposition", err < 1e-10, f"max error {err:.3e}"))
    gap = float(np.max(np.abs(para_lower(f, g, part).values
                              - para_upper(g, f, part).values)))
    checks.append(("paraproduct_transpose", gap < 1e-10, f"gap {gap:.3e}"))
    return checks


def _suite_heat() -> list[tuple[str, bool, str]]:
    checks = []
    grid = Grid(128, np.pi)
    f = GridField(grid, values=np.sin(2.0 * grid.points) + 0j)
    one = heat_propagate(heat_propagate(f, 0.05), 0.07).values
    two = heat_propagate(f, 0.12).values
    err = float(np.max(np.abs(one - two)))
    checks.append(("semigroup", err < 1e-12, f"max error {err:.3e}"))
    exact = np.exp(-0.5 * 4.0 * 0.1) * np.sin(2.0 * grid.points)
    err = float(np.max(np.abs(heat_propagate(f, 0.1).values - exact)))
    checks.append(("exact_mode_decay", err < 1e-12, f"max error {err:.3e}"))
    return checks


def _suite_solver() -> list[tuple[str, bool, str]]:
    checks = []
    grid = Grid(64, np.pi)
    mesh = 0.002 * np.arange(26)
    data = zero_enhanced(grid, mesh)
    w0 = GridField(grid, values=2.0 + np.cos(grid.points) + 0j)
    pf, report = solve_rhe(data, w0)
    exact = 2.0 + np.exp(-0.5 * mesh[-1]) * np.cos(grid.points)
    err = float(np.max(np.abs(pf.u.frames[-1] - exact)))
    checks.append(("zero_data_heat_flow", err < 1e-10, f"max error {err:.3e}"))
    checks.append(("reconstruction_residual", report.residual < 1e-10,
                   f"residual {report.residual:.3e}"))
    return checks


def _write_series_csv(path: Path, header: str, rows) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def _suite_figures(out: Path | None) -> list[tuple[str, bool, str]]:
    """Compute the figure data series (small, seeded, hermetic runs).

    With an output directory the series are written as CSV files in the
    documented schemas; the returned checks validate their basic shape.
    """
    from .equations import solve_YR
    from .kpz import solve_kpz, solve_kpz_direct
    from .polymer import sample_polymer, transition_kernel, variational_gap
    from .spaces import TimeField

    checks = []

    def emit(name, header, rows):
        if out is not None:
            _write_series_csv(out / name, header, rows)

    def build(grid, mesh, level, seed):
        dt = mesh[1] - mesh[0]
        xi = mollify(sample_noise(grid, mesh[-1], dt, seed=seed), level)
        y0 = stationary_initial(grid, dt, level, seed=seed)
        c1, c2 = renorm_constants(level, grid, dt, num_steps=64)
        return xi, build_trees(xi, y0, c1, c2, init_kind="stationary")

    # renormalization constants c_lr(n), c_dbl(n)
    cgrid = Grid(256, np.pi)
    const_rows = [(n, *renorm_constants(float(n), cgrid, 2.5e-5))
                  for n in (4, 8, 16, 32, 64)]
    emit("constants.csv", "n,c_lr,c_dbl", const_rows)
    clr = [r[1] for r in const_rows]
    checks.append(("constants_monotone",
                   all(a < b for a, b in zip(clr, clr[1:])),
                   f"c_lr {['%.3f' % v for v in clr]}"))

    # Cauchy-in-n distances between consecutive mollification levels
    ygrid = Grid(128, np.pi)
    ymesh = 1e-4 * np.arange(201)
    byn = {n: build(ygrid, ymesh, float(n), seed=90)[1]
           for n in (8, 16, 32, 64)}
    from .noise import ydist
    yrows = [(n, ydist(byn[n], byn[2 * n])) for n in (8, 16, 32)]
    emit("ydist.csv", "n,distance", yrows)
    checks.append(("ydist_finite",
                   all(np.isfinite(d) and d > 0 for _, d in yrows),
                   f"{['%.3f' % d for _, d in yrows]}"))

    # Cole-Hopf pipeline/direct agreement error per level
    hgrid = Grid(256, np.pi)
    hmesh = 2e-3 * np.arange(26)
    ch_rows = []
    for n in (4, 8, 16):
        xi, data = build(hgrid, hmesh, float(n), seed=91)
        hbar = GridField(hgrid, values=np.real(data.base.frames[0])
                         .astype(complex))
        res = solve_kpz(data, hbar, cross_check=False)
        direct = solve_kpz_direct(xi, data, hbar)
        scale = max(float(np.max(np.abs(direct.frames))), 1.0)
        ch_rows.append((n, float(np.max(np.abs(res.h.frames
                                               - direct.frames))) / scale))
    emit("colehopf.csv", "n,rel_error", ch_rows)
    checks.append(("colehopf_error",
                   all(e < 1e-3 for _, e in ch_rows),
                   f"{['%.2e' % e for _, e in ch_rows]}"))

    # heat-smoothing exponent fit for a white-noise sample
    sgrid = Grid(256, np.pi)
    rng = np.random.default_rng(92)
    rough = GridField(
        sgrid,
        values=(rng.standard_normal(256) / np.sqrt(sgrid.spacing)) + 0j)
    ts = np.geomspace(1e-4, 1e-2, 13)
    srows = [(float(t), float(np.max(np.abs(
        heat_propagate(rough, float(t)).values)))) for t in ts]
    emit("schauder.csv", "t,sup_norm", srows)
    slope = np.polyfit(np.log([r[0] for r in srows]),
                       np.log([r[1] for r in srows]), 1)[0]
    if out is not None:
        _write_json(out / "schauder_fit.json",
                    {"exponent": float(slope), "expected": -0.25})
    checks.append(("schauder_exponent", -0.35 < slope < -0.15,
                   f"fitted {slope:.3f}, expected -0.25"))

    # variational control values (deterministic reference case)
    pgrid = Grid(64, np.pi)
    pmesh = 2e-3 * np.arange(81)
    zero = zero_enhanced(pgrid, pmesh)
    hbar = GridField(pgrid, values=np.sin(pgrid.points) + 0j)
    res = solve_kpz(zero, hbar, cross_check=False)
    yr, _, _ = solve_YR(zero)
    rep = variational_gap(zero, res, yr, 0.0, n_paths=2000, seed=93)
    vrows = [(s, float(v), float(sig))
             for s, (v, sig) in sorted(rep["values"].items())]
    emit("variational.csv", "control_scale,value,sigma", vrows)
    if out is not None:
        _write_json(out / "variational_meta.json",
                    {"lhs": rep["lhs"], "optimal_gap": rep["optimal_gap"]})
    checks.append(("variational_dominates", bool(rep["dominates"]),
                   f"optimal gap {rep['optimal_gap']:.2e}"))

    # free polymer path sample for the marginal histograms
    zero_h = TimeField(pgrid, pmesh,
                       np.zeros((len(pmesh), pgrid.num_points)))
    chain = [transition_kernel(zero, zero_h, 0.0, 0.08),
             transition_kernel(zero, zero_h, 0.08, 0.16)]
    paths = sample_polymer(chain, 0.0, 2000, seed=94)
    prows = [(i, float(t), float(x))
             for i, p in enumerate(paths)
             for t, x in zip(p.times, p.positions)]
    emit("paths.csv", "path,time,position", prows)
    checks.append(("paths_sampled", len(prows) == 3 * 2000,
                   f"{len(paths)} paths"))
    return checks


_SUITES = {
    "config": _suite_config,
    "spectral": _suite_spectral,
    "paraproducts": _suite_paraproducts,
    "heat": _suite_heat,
    "solver": _suite_solver,
    "figures": None,  # handled specially: needs the output directory
}


def _cmd_verify(args) -> int:
    if args.suite == "all":
        names = sorted(_SUITES)
    elif args.suite in _SUITES:
        names = [args.suite]
    else:
        raise ValueError(f"unknown suite {args.suite!r}; available: "
                         f"{', '.join(sorted(_SUITES))}, all")
    out = _out_dir(args) if args.out else None
    results = []
    for name in names:
        if name == "figures":
            suite_checks = _suite_figures(out)
        else:
            suite_checks = _SUITES[name]()
        for check_name, ok, detail in suite_checks:
            results.append({"suite": name, "check": check_name,
                            "passed": bool(ok), "detail": detail})
            status = "PASS" if ok else "FAIL"
            print(f"{status} {name}.{check_name}: {detail}")
    all_ok = all(r["passed"] for r in results)
    if out is not None:
        _write_json(out / "verify_report.json",
                    {"suites": names, "checks": results, "passed": all_ok})
        _write_manifest(out, "verify", _load_cfg(args), args)
    n_fail = sum(not r["passed"] for r in results)
    print(f"{len(results) - n_fail}/{len(results)} checks passed")
    return 0 if all_ok else 2


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="parakpz",
                     description="Paracontrolled KPZ solver and verification "
                                 "suite on a periodic line.")
    parser.add_argument("--version", action="version",
                        version=f"parakpz {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, out_required=True):
        p.add_argument("--config", default=None,
                       help="key=value configuration file")
        p.add_argument("--out", required=out_required,
                       help="output directory")
        p.add_argument("--tol", type=float, default=None,
                       help="solver tolerance override")

    p = sub.add_parser("enhance", help="sample noise and build the tree data")
    common(p)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=float, required=True,
                   help="mollification level")
    p.add_argument("--num-points", dest="num_points", type=int, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--horizon", type=float, default=None)
    p.set_defaults(func=_cmd_enhance)

    p = sub.add_parser("solve-she",
                       help="solve the multiplicative heat equation")
    common(p)
    p.add_argument("--data", required=True, help="enhanced data directory")
    p.add_argument("--w0", required=True, help="initial condition field file")
    p.set_defaults(func=_cmd_solve_she)

    p = sub.add_parser("solve-kpz", help="solve KPZ via the factored pipeline")
    common(p)
    p.add_argument("--data", required=True, help="enhanced data directory")
    p.add_argument("--hbar", required=True,
                   help="initial height field file")
    p.add_argument("--times", default=None,
                   help="comma-separated snapshot times (default: final)")
    p.set_defaults(func=_cmd_solve_kpz)

    p = sub.add_parser("polymer", help="polymer kernels and path samples")
    common(p)
    p.add_argument("--data", required=True, help="enhanced data directory")
    p.add_argument("--h", required=True,
                   help="solve-kpz output directory (height field)")
    p.add_argument("--times", required=True,
                   help="comma-separated kernel times")
    p.add_argument("--paths", type=int, required=True,
                   help="number of sampled paths")
    p.add_argument("--x0", type=float, default=0.0, help="path start point")
    p.add_argument("--stride", type=int, default=1,
                   help="spatial subsampling of kernel points")
    p.add_argument("--seed", type=int, default=0, help="path sampling seed")
    p.set_defaults(func=_cmd_polymer)

    p = sub.add_parser("verify", help="run a hermetic verification suite")
    common(p, out_required=False)
    p.add_argument("--suite", required=True,
                   help=f"one of: {', '.join(sorted(_SUITES))}, all")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("info", help="print version, defaults, and suites")
    p.set_defaults(func=_cmd_info)
    return parser


def run_subcommand(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"parakpz: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(run_subcommand(sys.argv[1:]))


if __name__ == "__main__":
    main()
