"""Command-line entry points.

Subcommands: verify-spectral, simulate, shoot, direct, compare. Each run
writes its artifacts plus a manifest (config echo, version, seed, wall time,
artifact paths) into the output directory. Exit codes: 0 success, 2 config
error, 3 numerical failure, 4 failed checks.
"""

from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig
from .direct import (
    estimate_blowup_time,
    profile_distance_series,
    solve_u_physical,
    solve_w_direct,
    USolverOptions,
    WSolverOptions,
)
from .dynamics import init_state, run
from .grid import GridFunction, uniform_grid
from .operators import ModulationBreakdownError
from .params import eval_profile, scale_factor
from .serialize import fmt, load_json, save_json, write_trajectory_csv
from .shooting import SearchFailureError, exit_map, search
from .verify import verify_mehler, verify_spectral

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CHECKS = 4

_OVERRIDE_KEYS = [
    ("p", float), ("k", int), ("b0", float), ("delta", float), ("s0", float),
    ("ds", float), ("horizon", float), ("quad_order", int), ("seed", int),
    ("outdir", str), ("variant", str), ("shoot_depth", int), ("shoot_box", float),
    ("u_T", float),
]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blowlab",
        description="numerical laboratory for flat self-similar blowup",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", help="JSON config file")
        for name, typ in _OVERRIDE_KEYS:
            sp.add_argument(f"--{name.replace('_', '-')}", type=typ, dest=name)
        sp.add_argument("--d", type=str, help="comma-separated seed coordinates")
        return sp

    add_common(sub.add_parser("verify-spectral", help="run the basis/propagator identity suites"))
    add_common(sub.add_parser("simulate", help="integrate one modulated trajectory"))
    shoot_p = add_common(sub.add_parser("shoot", help="search for a surviving seed"))
    shoot_p.add_argument("--jobs", type=int, default=1, help="workers for post-search probes")
    shoot_p.add_argument("--even-only", action="store_true", dest="even_only")
    shoot_p.add_argument("--linear-only", action="store_true", dest="linear_only")
    add_common(sub.add_parser("direct", help="run the direct PDE solvers"))
    cmp_p = add_common(sub.add_parser("compare", help="profile-trend checks against a survivor"))
    cmp_p.add_argument("--from", dest="from_path", help="shoot manifest or certificate JSON")
    return parser


def _load_config(args) -> RunConfig:
    data = {}
    if args.config:
        data = RunConfig.from_file(args.config).to_dict()
    for name, _ in _OVERRIDE_KEYS:
        val = getattr(args, name, None)
        if val is not None:
            data[name] = val
    for flag in ("even_only", "linear_only"):
        if getattr(args, flag, False):
            data[flag] = True
    if getattr(args, "d", None):
        data["d"] = [float(x) for x in args.d.split(",")]
    return RunConfig.from_dict(data)


def _manifest(cfg: RunConfig, command: str, artifacts: dict, t0: float, extra=None) -> dict:
    man = {
        "command": command,
        "config": cfg.to_dict(),
        "version": __version__,
        "seed": cfg.seed,
        "wall_time_s": time.time() - t0,
        "artifacts": artifacts,
    }
    if extra:
        man.update(extra)
    return man


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.outdir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_verify_spectral(cfg: RunConfig) -> int:
    t0 = time.time()
    out = _outdir(cfg)
    rep_s = verify_spectral(quad_order=cfg.quad_order)
    rep_m = verify_mehler(k=cfg.k, quad_order=cfg.quad_order)
    ok = rep_s.passed() and rep_m.passed()
    report = {"spectral": rep_s.to_dict(), "mehler": rep_m.to_dict(), "passed": ok}
    path = save_json(report, out / "spectral-report.json")
    save_json(
        _manifest(cfg, "verify-spectral", {"report": str(path)}, t0),
        out / "manifest-verify-spectral.json",
    )
    print(f"max orthogonality relative error: {rep_s.orthogonality_rel_err:.3e}")
    print(f"max generator-action relative error: {rep_s.jordan_rel_err:.3e}")
    print(f"max product-identity error: {rep_s.product_identity_err:.3e}")
    print(f"max propagator multiplier error: {rep_m.multiplier_rel_err:.3e}")
    print(f"semigroup composition error: {rep_m.semigroup_err:.3e}")
    print(f"kernel mass relative error: {rep_m.mass_rel_err:.3e}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_CHECKS


def _cmd_simulate(cfg: RunConfig) -> int:
    t0 = time.time()
    out = _outdir(cfg)
    params = cfg.params()
    d = np.asarray(cfg.seed_vector())
    if d.size != 2 * cfg.k or np.max(np.abs(d)) > 2.0 + 1e-12:
        raise ConfigError("seed d must have length 2k with |d_i| <= 2")
    opts = cfg.flow_options()
    state0 = init_state(d, cfg.delta, cfg.b0, cfg.s0, params, opts)
    record = run(
        state0, cfg.s0 + cfg.horizon, cfg.delta, cfg.b0, params, ds=cfg.ds, opts=opts
    )
    csv_path = write_trajectory_csv(record, params, out / "trajectory.csv")
    save_json(
        _manifest(
            cfg, "simulate", {"trajectory": str(csv_path)}, t0,
            extra={"exit": None if record.exit is None else {
                "s_star": record.exit.s_star,
                "bound": record.exit.bound,
                "mode": record.exit.mode,
                "omega": record.exit.omega,
            }},
        ),
        out / "manifest-simulate.json",
    )
    if record.exit is None:
        print(f"survived to s = {record.samples[-1].s:.4f}")
    else:
        print(f"exited at s = {record.exit.s_star:.4f} through {record.exit.bound}")
    return EXIT_OK


def _cmd_shoot(cfg: RunConfig, jobs: int = 1) -> int:
    t0 = time.time()
    out = _outdir(cfg)
    params = cfg.params()
    shoot_cfg = cfg.shoot_config()
    try:
        d_star, cert = search(shoot_cfg, params)
    except SearchFailureError as exc:
        info = {
            "failed": True,
            "message": str(exc),
            "best_d": [float(x) for x in exc.best_d],
            "best_s_star": exc.best_result.s_star,
        }
        save_json(info, out / "certificate.json")
        save_json(
            _manifest(cfg, "shoot", {"certificate": str(out / 'certificate.json')}, t0),
            out / "manifest-shoot.json",
        )
        print(f"search failed: {exc}")
        return EXIT_NUMERICAL

    result = exit_map(d_star, shoot_cfg, params)
    csv_path = write_trajectory_csv(result.record, params, out / "survivor-trajectory.csv")
    cert_dict = {"failed": False, **cert.to_dict()}
    if jobs > 1:
        probes = _perturbation_probes(d_star, shoot_cfg, params, jobs)
        cert_dict["perturbation_probes"] = probes
    cert_path = save_json(cert_dict, out / "certificate.json")
    save_json(
        _manifest(
            cfg, "shoot",
            {"certificate": str(cert_path), "trajectory": str(csv_path)}, t0,
        ),
        out / "manifest-shoot.json",
    )
    print(f"survivor d* = {[f'{x:.3e}' for x in d_star]} after {cert.n_trajectories} trajectories")
    print(f"b drift over last half horizon: {cert.b_drift:.3e}")
    return EXIT_OK


def _perturbation_probes(d_star, cfg, params, jobs: int) -> list[dict]:
    """Fan out one bumped trajectory per coordinate; report exit behavior."""
    dim = d_star.size
    candidates = []
    for i in range(dim):
        d = d_star.copy()
        d[i] += 0.25
        candidates.append((i, d))

    def probe(item):
        i, d = item
        res = exit_map(np.clip(d, -2.0, 2.0), cfg, params)
        info = res.record.exit
        return {
            "coordinate": i,
            "survived": res.survived,
            "s_star": res.s_star,
            "bound": None if info is None else info.bound,
            "omega": None if info is None else info.omega,
        }

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(probe, candidates))


def _cmd_direct(cfg: RunConfig) -> int:
    t0 = time.time()
    out = _outdir(cfg)
    params = cfg.params()

    # physical-frame blowup experiment from space-independent data
    xg = uniform_grid(cfg.u_x_max, cfg.u_n_nodes)
    amp = params.kappa * cfg.u_T ** (-1.0 / (params.p - 1.0))
    u0 = GridFunction(xg, np.full_like(xg, amp))
    urun = solve_u_physical(
        u0, cfg.u_t_max, params, USolverOptions(blowup_threshold=cfg.blowup_threshold)
    )
    fit = estimate_blowup_time(urun, params)
    _write_series_csv(out / "u-sup-series.csv", ("t", "sup_u"), urun.sup_times, urun.sup_series)

    # self-similar-frame run seeded by the configured d
    params_opts = cfg.flow_options()
    d = np.asarray(cfg.seed_vector())
    yg = uniform_grid(cfg.direct_y_max, cfg.direct_n_nodes)
    w0_vals = _seeded_profile(yg, d, cfg, params)
    wrun = solve_w_direct(
        GridFunction(yg, w0_vals), (cfg.s0, cfg.s0 + cfg.direct_s_len), params
    )
    series = profile_distance_series(wrun, params, y_fit=cfg.y_fit, y_window=cfg.y_window)
    _write_series_csv(
        out / "w-profile-series.csv", ("s", "b_fit", "sup_distance"),
        series.times, series.b_series, series.distances,
    )

    report = {
        "blowup_fit": {
            "T_hat": fit.T_hat,
            "T_true": cfg.u_T,
            "rel_err": abs(fit.T_hat - cfg.u_T) / cfg.u_T,
            "slope": fit.slope,
            "residual": fit.residual,
        },
        "w_run": {
            "termination": wrun.termination,
            "n_snapshots": int(len(wrun.times)),
            "loglog_slope": series.loglog_slope,
        },
    }
    rep_path = save_json(report, out / "direct-report.json")
    save_json(
        _manifest(
            cfg, "direct",
            {
                "report": str(rep_path),
                "u_sup_series": str(out / "u-sup-series.csv"),
                "w_profile_series": str(out / "w-profile-series.csv"),
            },
            t0,
        ),
        out / "manifest-direct.json",
    )
    print(f"blowup time recovered: {fit.T_hat:.6f} (true {cfg.u_T}, rel err {abs(fit.T_hat-cfg.u_T)/cfg.u_T:.2e})")
    print(f"w-run termination: {wrun.termination}; profile distance slope {series.loglog_slope:.3f}")
    return EXIT_OK


def _seeded_profile(yg: np.ndarray, d: np.ndarray, cfg: RunConfig, params) -> np.ndarray:
    f, e = eval_profile(yg, cfg.b0, params)
    amp = float(scale_factor(cfg.s0, params.k)) ** (-cfg.delta)
    psi = np.zeros_like(yg)
    for i, di in enumerate(d):
        psi += di * amp * yg**i
    return f * (1.0 + e * psi)


def _cmd_compare(cfg: RunConfig, from_path: str | None) -> int:
    t0 = time.time()
    out = _outdir(cfg)
    params = cfg.params()

    d = np.asarray(cfg.seed_vector())
    source = "config"
    if from_path:
        data = load_json(from_path)
        if "artifacts" in data:  # a manifest; follow it to the certificate
            data = load_json(data["artifacts"]["certificate"])
        if data.get("failed"):
            raise ConfigError(f"{from_path}: shoot run failed; no survivor to compare")
        d = np.asarray(data["d_star"], dtype=float)
        source = from_path

    # (a) manufactured solution: distances and fitted b must be exact
    from .direct import PdeRun, compare_profile

    T, b_star = cfg.u_T, cfg.b0
    xg = uniform_grid(cfg.u_x_max, cfg.u_n_nodes)
    ts = T - T * np.exp(-np.linspace(0.0, 6.0, 25))
    snaps = np.array(
        [
            (T - t) ** (-1.0 / (params.p - 1.0))
            * eval_profile(xg * (T - t) ** (-1.0 / (2 * params.k)), b_star, params)[0]
            for t in ts
        ]
    )
    man_run = PdeRun(
        nodes=xg, times=ts, snapshots=snaps, sup_times=ts,
        sup_series=np.array([float(np.max(np.abs(s))) for s in snaps]),
        termination="blowup-threshold", frame="u",
    )
    man = compare_profile(man_run, T, params, y_fit=cfg.y_fit, y_window=cfg.y_window)
    man_dist = float(np.max(man.distances))
    man_berr = float(np.max(np.abs(man.b_series - b_star)))

    # (b) survivor-seeded self-similar run: trend checks
    yg = uniform_grid(cfg.direct_y_max, cfg.direct_n_nodes)
    w0 = GridFunction(yg, _seeded_profile(yg, d, cfg, params))
    s_len = max(cfg.direct_s_len, 5.0 * np.log(2.0) + 0.5)
    wrun = solve_w_direct(w0, (cfg.s0, cfg.s0 + s_len), params)
    series = profile_distance_series(wrun, params, y_fit=cfg.y_fit, y_window=cfg.y_window)

    half = cfg.s0 + s_len / 2.0
    mask = series.times >= half - 1e-9
    ds_half = series.distances[mask]
    checkpoints = np.linspace(half, cfg.s0 + s_len, 6)
    d_checks = np.interp(checkpoints, series.times, series.distances)
    non_increasing = bool(np.all(np.diff(d_checks) <= 1e-12 + 0.0 * d_checks[:-1]))

    s_dyadic = cfg.s0 + np.log(2.0) * np.arange(6)
    b_dyadic = np.interp(s_dyadic, series.times, series.b_series)
    increments = np.abs(np.diff(b_dyadic))
    shrinking = bool(np.all(np.diff(increments) <= 1e-15))

    report = {
        "survivor_source": source,
        "d": [float(x) for x in d],
        "manufactured": {
            "max_distance": man_dist,
            "max_b_error": man_berr,
            "passed": man_dist < 1e-6 and man_berr < 1e-6,
        },
        "survivor_trend": {
            "distance_checkpoints": [float(x) for x in d_checks],
            "non_increasing": non_increasing,
            "b_dyadic_increments": [float(x) for x in increments],
            "increments_shrinking": shrinking,
            "n_half_window_points": int(ds_half.size),
        },
    }
    ok = report["manufactured"]["passed"] and non_increasing and shrinking
    report["passed"] = ok
    rep_path = save_json(report, out / "compare-report.json")
    save_json(
        _manifest(cfg, "compare", {"report": str(rep_path)}, t0),
        out / "manifest-compare.json",
    )
    print(f"manufactured: max distance {man_dist:.2e}, max b error {man_berr:.2e}")
    print(f"survivor trend: non-increasing={non_increasing}, shrinking increments={shrinking}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_CHECKS


def _write_series_csv(path, header, *columns) -> None:
    import csv as _csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([fmt(v) for v in row])


def run_experiment(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        cfg = _load_config(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "verify-spectral":
            return _cmd_verify_spectral(cfg)
        if args.command == "simulate":
            return _cmd_simulate(cfg)
        if args.command == "shoot":
            return _cmd_shoot(cfg, jobs=getattr(args, "jobs", 1))
        if args.command == "direct":
            return _cmd_direct(cfg)
        if args.command == "compare":
            return _cmd_compare(cfg, getattr(args, "from_path", None))
        print(f"unknown command {args.command}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ModulationBreakdownError, SearchFailureError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(run_experiment(sys.argv[1:]))


if __name__ == "__main__":
    main()
