"""Command-line entry point: ``cavityobs simulate | mc | validate``.

Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 property
failure, 4 more than 1% of Monte Carlo trials aborted.
"""

from __future__ import annotations

import argparse
import functools
import os
import subprocess
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .config import VARIANT_CHOICES, ConfigError, RunConfig, load_config
from .harness import METRICS, WINDOWS, amplitude_phase_errors, run_monte_carlo, run_trial, window_mask
from .kernel import COLUMNS, available_backends
from .validate import run_properties

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_PROPERTY, EXIT_ABORTS = 0, 1, 2, 3, 4
MAX_ABORT_FRACTION = 0.01

TRACE_SCHEMA = "cavityobs-trace/1"
CURVES_SCHEMA = "cavityobs-curves/1"
SCORES_SCHEMA = "cavityobs-scores/1"
MANIFEST_SCHEMA = "cavityobs-manifest/1"

TRACE_UNITS = ("t in s; x_star, x, y, fwd, refl, xpred, xhat, uff, ufb, u in normalized volts; "
               "d_true in volts/s; dhat in volts per sample; phases in rad; detuning in rad/s")


@functools.lru_cache(maxsize=1)
def build_tag() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=5, check=True)
        return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        return __version__


def _header(schema: str, cfg: RunConfig, seed: int, **extra) -> str:
    lines = [f"schema: {schema}", f"config_sha256: {cfg.config_hash()}", f"seed: {seed}"]
    lines += [f"{k}: {v}" for k, v in extra.items()]
    return "".join(f"# {line}\n" for line in lines)


def _write_csv(path: str, header: str, names, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header)
        fh.write(",".join(names) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    run_kw = {}
    for name in ("seed", "trials", "variant", "workers", "backend"):
        value = getattr(args, name, None)
        if value is not None:
            run_kw[name] = value
    if getattr(args, "out_dir", None) is not None:
        run_kw["out_dir"] = args.out_dir
    metrics = cfg.metrics
    if getattr(args, "metric_window", None) is not None:
        metrics = replace(metrics, window=args.metric_window)
    try:
        return replace(cfg, run=replace(cfg.run, **run_kw), metrics=metrics)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def trace_rows(record, scenario):
    """Rows of the per-step trace with truth, log table and derived errors."""
    e_a, e_phi = amplitude_phase_errors(record)
    track = record.tracking_error()
    flattop = window_mask(scenario.macropulse, record.t, "flattop")
    tr = record.truth
    for k in range(record.n_steps):
        yield ((k, record.t[k], *record.x_star[k], tr.delta_omega[k], tr.phi_fwd[k], tr.phi_rec[k],
                *tr.disturbance[k]) + tuple(record.table[k]) + (e_a[k], e_phi[k], track[k], int(flattop[k])))


TRACE_COLUMNS = (("step", "t", "x_star_i", "x_star_q", "dw_true", "phi_fwd_true", "phi_rec_true",
                  "d_true_i", "d_true_q") + COLUMNS + ("e_amp", "e_phase", "track_err", "in_flattop"))


def cmd_simulate(cfg: RunConfig) -> int:
    out_dir, seed = cfg.run.out_dir, cfg.run.seed
    os.makedirs(out_dir, exist_ok=True)
    status = EXIT_OK
    for variant in cfg.run.variants:
        rec = run_trial(seed, cfg.scenario, variant, backend=cfg.run.backend)
        path = os.path.join(out_dir, f"trace_{variant}_seed{seed}.csv")
        header = _header(TRACE_SCHEMA, cfg, seed, variant=variant, build=build_tag(),
                         abort_step=rec.abort_step, units=TRACE_UNITS)
        _write_csv(path, header, TRACE_COLUMNS, trace_rows(rec, cfg.scenario))
        mask = window_mask(cfg.scenario.macropulse, rec.t, "flattop")
        err = rec.tracking_error()[mask]
        print(f"{variant}: wrote {path} ({rec.n_steps} rows); "
              f"max flattop tracking error {np.nanmax(err):.3e}")
        if rec.aborted:
            print(f"{variant}: trial aborted at step {rec.abort_step}", file=sys.stderr)
            status = EXIT_ABORTS
    return status


def cmd_mc(cfg: RunConfig, workers: int | None = None) -> int:
    run = cfg.run
    os.makedirs(run.out_dir, exist_ok=True)
    thresholds = cfg.metrics.thresholds()
    results = run_monte_carlo(run.trials, run.seed, cfg.scenario, run.variants, thresholds=thresholds,
                              metric_mode=cfg.metrics.mode, workers=workers or run.workers,
                              backend=run.backend)
    status = EXIT_OK
    manifest = [f"schema = {MANIFEST_SCHEMA}", f"build = {build_tag()}",
                f"config_sha256 = {cfg.config_hash()}", f"seed = {run.seed}", f"trials = {run.trials}",
                f"headline_window = {cfg.metrics.window}"]
    for variant, res in results.items():
        name = variant.value
        header = _header(CURVES_SCHEMA, cfg, run.seed, variant=name, trials=run.trials,
                         completed=run.trials - res.abort_count, metric_mode=res.metric_mode)
        rows = ((w, m, thr, lik) for w in WINDOWS for m in METRICS
                for thr, lik in zip(thresholds[m], res.curves[w][m]))
        _write_csv(os.path.join(run.out_dir, f"curves_{name}.csv"), header,
                   ("window", "metric", "threshold", "likelihood"), rows)
        if res.metric_mode == "average":
            done = [i for i in range(run.trials) if i not in set(res.aborted)]
            rows = ((i, w, *(res.scores[w][m][j] for m in METRICS))
                    for w in WINDOWS for j, i in enumerate(done))
            _write_csv(os.path.join(run.out_dir, f"scores_{name}.csv"),
                       _header(SCORES_SCHEMA, cfg, run.seed, variant=name),
                       ("trial", "window") + METRICS, rows)
        fraction = res.abort_count / run.trials
        manifest += [f"{name}.aborted = {res.abort_count}",
                     f"{name}.aborted_trials = {', '.join(map(str, res.aborted)) or 'none'}"]
        if fraction > MAX_ABORT_FRACTION:
            print(f"{name}: {res.abort_count}/{run.trials} trials aborted", file=sys.stderr)
            status = EXIT_ABORTS
        _print_summary(name, res, thresholds, cfg.metrics.window)
    manifest += [f"config.{line}" for line in cfg.echo()]
    with open(os.path.join(run.out_dir, "manifest.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(manifest) + "\n")
    print(f"wrote results to {run.out_dir}")
    return status


def _print_summary(name, res, thresholds, window):
    mid = len(thresholds["phase"]) // 2
    parts = [f"{m} {res.curves[window][m][mid]:.3f}@{thresholds[m][mid]:.3g}" for m in METRICS]
    print(f"{name} [{window}, mid-grid likelihood]: " + "; ".join(parts))


def cmd_validate(cfg: RunConfig, flip_descent_sign: bool = False) -> int:
    sign = cfg.scenario.options.descent_sign * (-1.0 if flip_descent_sign else 1.0)
    results = run_properties(cfg.scenario, descent=sign, backend=cfg.run.backend)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} properties passed")
    return EXIT_PROPERTY if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cavityobs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config file (section.key = value lines)")
    common.add_argument("--backend", choices=available_backends(), help="trial kernel backend")

    sim = sub.add_parser("simulate", parents=[common], help="write one trial trace per variant")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--variant", choices=VARIANT_CHOICES)
    sim.add_argument("--out-dir")

    mc = sub.add_parser("mc", parents=[common], help="run the paired Monte Carlo study")
    mc.add_argument("--seed", type=int)
    mc.add_argument("--trials", type=int)
    mc.add_argument("--variant", choices=VARIANT_CHOICES)
    mc.add_argument("--out-dir")
    mc.add_argument("--metric-window", choices=WINDOWS, help="window for the printed summary")
    mc.add_argument("--workers", type=int, help="worker processes (results do not depend on it)")

    val = sub.add_parser("validate", parents=[common], help="run the built-in property suite")
    val.add_argument("--flip-descent-sign", action="store_true",
                     help="debug: invert the detuning update sign (the descent check must fail)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "mc":
            return cmd_mc(cfg)
        return cmd_validate(cfg, args.flip_descent_sign)
    except OSError as exc:
        print(f"error: {exc.filename or cfg.run.out_dir}: {exc.strerror}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
