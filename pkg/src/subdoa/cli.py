"""Command-line front end.

Four subcommands:

* ``estimate`` - one snapshot, selected methods, DOA table plus spectrum CSVs
* ``sweep``    - Monte Carlo sweep from a config file, trial + aggregate CSVs
* ``spectra``  - one realization, every method's spectrum to CSV (one file each)
* ``selftest`` - quick noiseless recovery oracle, exit code reports the verdict

Exit codes: 0 success, 1 usage/config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .array_model import Scenario, build_grid_manifold, generate_snapshot, make_ula
from .baselines import MusicOptions, run_music, run_sparsity_only
from .config import config_digest, load_config, packaged_config_path
from .errors import SubdoaError
from .harness import (METHODS, run_sweep, write_aggregate_csv, write_trials_csv)
from .pipeline import run_proposed1, run_proposed2
from .solver import SolverOptions

__all__ = ["main", "console_entry"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser():
    parser = _Parser(prog="subdoa", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True,
                        help="TOML experiment config (path or packaged name like fig1.toml)")
    common.add_argument("--out", default=None,
                        help="output directory (default: $SUBDOA_OUT or ./subdoa_out)")
    common.add_argument("--methods", default=None,
                        help=f"comma list from {{{','.join(METHODS)}}}")
    common.add_argument("--grid-step", type=float, default=None,
                        help="override grid step in degrees")

    est = sub.add_parser("estimate", parents=[common],
                         help="estimate DOAs from one synthesized snapshot")
    est.add_argument("--snr", type=float, default=None, help="override SNR in dB")
    est.add_argument("--seed", type=int, default=0)

    sw = sub.add_parser("sweep", parents=[common], help="run a Monte Carlo sweep")
    sw.add_argument("--trials", type=int, default=None, help="override n_trials")
    sw.add_argument("--jobs", type=int, default=1, help="parallel trial workers")
    sw.add_argument("--plots", action="store_true", help="render RMSE-vs-SNR plot")
    sw.add_argument("--save-spectra", action="store_true",
                    help="persist every trial's spectra (large output)")

    sp = sub.add_parser("spectra", parents=[common],
                        help="dump each method's spectrum for one realization")
    sp.add_argument("--snr", type=float, default=None, help="override SNR in dB")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--plots", action="store_true", help="render spectra panel")

    st = sub.add_parser("selftest", help="noiseless recovery oracle (no config needed)")
    st.add_argument("--seeds", type=int, default=10)
    return parser


def _out_dir(arg):
    path = Path(arg or os.environ.get("SUBDOA_OUT", "subdoa_out"))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _resolve_config(arg):
    path = Path(arg)
    if path.exists():
        return path
    packaged = packaged_config_path(str(arg))
    if packaged is not None:
        return packaged
    raise _UsageError(f"config file not found: {arg}")


def _parse_methods(arg):
    if arg is None:
        return None
    methods = tuple(m.strip() for m in arg.split(",") if m.strip())
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise _UsageError(
            f"unknown method(s) {', '.join(bad)}; valid: {', '.join(METHODS)}")
    return methods


def _write_manifest(out, command, config_path, extra):
    manifest = {
        "artifact": "subdoa",
        "version": __version__,
        "command": command,
        "config": str(config_path),
        "config_sha256": config_digest(config_path),
    }
    manifest.update(extra)
    path = out / "run-manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _single_realization(cfg, methods, seed):
    scenario = cfg.scenario
    if np.isinf(scenario.snr_db):
        raise _UsageError("config has no [noise].snr_db; pass --snr")
    snapshot = generate_snapshot(scenario, seed)
    manifold = build_grid_manifold(scenario.geometry, cfg.grid_degrees)
    sigma2 = scenario.noise_variance
    q = scenario.num_sources
    estimates = {}
    for method in methods:
        if method == "Proposed1":
            estimates[method] = run_proposed1(snapshot, manifold, cfg.mu, cfg.C,
                                              sigma2, q, cfg.solver_opts)
        elif method == "Proposed2":
            estimates[method] = run_proposed2(snapshot, manifold, cfg.mu, cfg.C,
                                              sigma2, q, cfg.solver_opts)
        elif method == "SparsityOnly":
            estimates[method] = run_sparsity_only(snapshot, manifold, cfg.C,
                                                  sigma2, q, cfg.solver_opts)
        elif method == "MUSIC":
            opts = MusicOptions(q=q, smoothing_length=cfg.music_smoothing_length,
                                forward_backward=cfg.music_forward_backward)
            estimates[method] = run_music(snapshot, scenario.geometry,
                                          cfg.grid_degrees, opts)
    return snapshot, estimates


def _cmd_estimate(args):
    config_path = _resolve_config(args.config)
    cfg = load_config(config_path, snr_override=args.snr,
                      grid_step_override=args.grid_step)
    methods = _parse_methods(args.methods) or METHODS
    out = _out_dir(args.out)
    snapshot, estimates = _single_realization(cfg, methods, args.seed)
    rows = []
    for method, est in estimates.items():
        est.to_csv(out / f"spectrum_{method}.csv")
        angles = ", ".join(f"{a:+.2f}" for a in est.peak_angles)
        rows.append(f"{method:>12}: {angles}")
    truth = ", ".join(f"{a:+.2f}" for a in sorted(snapshot.truth.doas_deg))
    print(f"true DOAs (deg): {truth}")
    print("estimated DOAs (deg):")
    for row in rows:
        print(row)
    _write_manifest(out, "estimate", config_path,
                    {"seed": args.seed, "snr_db": float(cfg.scenario.snr_db),
                     "methods": list(methods)})
    print(f"spectra written to {out}")
    return 0


def _cmd_sweep(args):
    config_path = _resolve_config(args.config)
    cfg = load_config(config_path, trials_override=args.trials,
                      methods_override=_parse_methods(args.methods),
                      grid_step_override=args.grid_step)
    if cfg.sweep is None:
        raise _UsageError(f"config {config_path} has no [sweep] section")
    out = _out_dir(args.out)
    spectra_dir = out / "spectra" if args.save_spectra else None
    report, trials = run_sweep(cfg.sweep, jobs=max(1, args.jobs),
                               spectra_dir=spectra_dir)
    write_trials_csv(trials, cfg.scenario.num_sources, out / "trials.csv")
    write_aggregate_csv(report, out / "aggregate.csv")
    _write_manifest(out, "sweep", config_path, {
        "base_seed": cfg.sweep.base_seed,
        "n_trials": cfg.sweep.n_trials,
        "methods": list(cfg.sweep.methods),
        "snr_grid_db": list(cfg.sweep.snr_grid_db),
    })
    for method in report.methods:
        cells = " ".join(
            f"{snr:g}dB={report.cell(method, snr).rmse_deg:.3f}"
            for snr in report.snr_grid_db)
        print(f"{method:>12} RMSE(deg): {cells}")
    if args.plots:
        _plot_rmse(report, out / "rmse_vs_snr.png")
    print(f"results written to {out}")
    return 0


def _cmd_spectra(args):
    config_path = _resolve_config(args.config)
    cfg = load_config(config_path, snr_override=args.snr,
                      grid_step_override=args.grid_step)
    methods = _parse_methods(args.methods) or METHODS
    out = _out_dir(args.out)
    _, estimates = _single_realization(cfg, methods, args.seed)
    for method, est in estimates.items():
        est.to_csv(out / f"spectrum_{method}.csv")
    _write_manifest(out, "spectra", config_path,
                    {"seed": args.seed, "snr_db": float(cfg.scenario.snr_db),
                     "methods": list(methods)})
    if args.plots:
        _plot_spectra(estimates, out / "spectra.png")
    print(f"{len(estimates)} spectrum files written to {out}")
    return 0


def _cmd_selftest(args):
    from .array_model import default_grid
    geom = make_ula(24, 0.5, [6, 6, 6, 6])
    grid = default_grid(step_deg=5.0)
    opts = SolverOptions(primal_tol=1e-7, dual_tol=1e-7)
    failures = 0
    for seed in range(args.seeds):
        rng = np.random.default_rng(seed)
        angles = np.sort(rng.choice(grid[::5], size=2, replace=False))
        scenario = Scenario(geometry=geom, source_doas=tuple(angles),
                            source_powers=(1.0, 1.0), snr_db=np.inf)
        snapshot = generate_snapshot(scenario, seed)
        manifold = build_grid_manifold(geom, grid)
        est = run_proposed2(snapshot, manifold, 1.0, 2.0, 1e-8 / (2.0 * 24), 2, opts)
        ok = np.array_equal(est.peak_angles, angles)
        failures += not ok
        print(f"seed {seed}: true={list(angles)} est={list(est.peak_angles)} "
              f"{'ok' if ok else 'MISS'}")
    print(f"selftest: {args.seeds - failures}/{args.seeds} exact recoveries")
    return 0 if failures == 0 else 2


def _plot_rmse(report, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(6, 4))
    for method in report.methods:
        ys = [report.cell(method, snr).rmse_deg for snr in report.snr_grid_db]
        ax.semilogy(report.snr_grid_db, ys, marker="o", label=method)
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("RMSE (deg)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _plot_spectra(estimates, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    n = len(estimates)
    fig, axes = plt.subplots((n + 1) // 2, 2, figsize=(9, 3 * ((n + 1) // 2)),
                             squeeze=False)
    for ax, (method, est) in zip(axes.ravel(), estimates.items()):
        mags = est.magnitudes / max(est.magnitudes.max(), 1e-300)
        ax.plot(est.grid_degrees, mags)
        for a, _ in est.peaks:
            ax.axvline(a, color="r", ls="--", alpha=0.5)
        ax.set_title(method)
        ax.set_xlabel("angle (deg)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "estimate":
            return _cmd_estimate(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "spectra":
            return _cmd_spectra(args)
        if args.command == "selftest":
            return _cmd_selftest(args)
        raise _UsageError(f"unknown command {args.command}")
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SubdoaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1 if "config" in str(exc).lower() else 2
    except Exception as exc:  # runtime failures map to exit 2
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def console_entry():
    sys.exit(main())


if __name__ == "__main__":
    console_entry()
