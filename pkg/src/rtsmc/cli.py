"""Command-line front door: simulate, estimate, validate.

Exit codes: 0 success, 2 input error, 3 inference failure, 4 validation
threshold failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .engine import EstimateSeries, run
from .errors import RtsmcError
from .ingest import ingest_csv
from .scenario import change_detection_score, coverage, error_metrics, generate

log = logging.getLogger("rtsmc")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INFERENCE = 3
EXIT_THRESHOLD = 4

SCENARIO_COLUMNS = ("day", "R_true", "j_true", "C_bar", "C_noisy")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rtsmc",
        description="Estimate time-varying reproduction numbers from daily count series "
        "by particle filtering and backward smoothing over a renewal model.",
    )
    parser.add_argument("--version", action="version", version=f"rtsmc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="key = JSON-value config file")
        p.add_argument("--output", type=Path, default=Path("."), help="output directory")
        p.add_argument("--seed", type=int, help="random seed")
        p.add_argument("--no-plots", action="store_true", help="skip figure rendering")

    sim = sub.add_parser("simulate", help="generate a synthetic ground-truth scenario")
    common(sim)
    sim.add_argument("--noise", type=float, help="reporting-noise multiplier N")

    est = sub.add_parser("estimate", help="run the filter/smoother on a date,count CSV")
    common(est)
    est.add_argument("--input", type=Path, required=True, help="date,count CSV")
    est.add_argument("--particles", type=int, help="number of particles")
    est.add_argument("--no-smoothing", action="store_true", help="report filtered estimates only")
    est.add_argument("--likelihood", choices=["gaussian", "poisson"], help="observation likelihood")

    val = sub.add_parser("validate", help="score estimates against a stored scenario")
    common(val)
    val.add_argument("--noise", type=float, help="reporting-noise multiplier N (with --regenerate)")
    val.add_argument("--particles", type=int)
    val.add_argument("--no-smoothing", action="store_true")
    val.add_argument("--likelihood", choices=["gaussian", "poisson"])
    val.add_argument("--regenerate", action="store_true",
                     help="run simulate and estimate first")
    return parser


def _load_config(args) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "noise", None) is not None:
        overrides["noise_multiplier"] = args.noise
    if getattr(args, "particles", None) is not None:
        overrides["n_particles"] = args.particles
    if getattr(args, "no_smoothing", False):
        overrides["smoother"] = "none"
    if getattr(args, "likelihood", None) is not None:
        overrides["likelihood"] = args.likelihood
    if args.no_plots:
        overrides["plots"] = False
    return config.updated(overrides)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(x):
    return format(float(x), ".6g")


def simulate_cmd(config: RunConfig, outdir: Path) -> int:
    outdir.mkdir(parents=True, exist_ok=True)
    scenario = generate(config.scenario_config())
    epoch = config.epoch()

    rows = [
        (day, _fmt(scenario.R_true[day]), _fmt(scenario.j_true[day]),
         _fmt(scenario.C_bar[day]), _fmt(scenario.C_noisy[day]))
        for day in range(scenario.horizon)
    ]
    _write_csv(outdir / "scenario.csv", SCENARIO_COLUMNS, rows)

    case_rows = [
        ((epoch + datetime.timedelta(days=day)).isoformat(), _fmt(scenario.C_noisy[day]))
        for day in range(scenario.horizon)
    ]
    _write_csv(outdir / "cases.csv", ("date", "count"), case_rows)

    _write_json(outdir / "scenario_meta.json", {
        "change_days": list(scenario.change_days),
        "config": config.to_dict(),
        "version": __version__,
    })
    if config.plots:
        from .plots import scenario_figure

        scenario_figure(scenario, outdir / "scenario.png")
    log.info("wrote scenario of %d days to %s", scenario.horizon, outdir)
    return EXIT_OK


def estimate_cmd(config: RunConfig, input_path: Path, outdir: Path) -> int:
    try:
        observed = ingest_csv(input_path)
    except (OSError, RtsmcError) as exc:
        print(f"rtsmc: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    outdir.mkdir(parents=True, exist_ok=True)
    try:
        result = run(observed, config.model_params(), config.run_options())
    except RtsmcError as exc:
        print(f"rtsmc: inference failed: {exc}", file=sys.stderr)
        return EXIT_INFERENCE

    series = result.series
    _write_csv(outdir / "estimates.csv", EstimateSeries.COLUMNS, series.rows())
    _write_json(outdir / "run_meta.json", {
        "config": config.to_dict(),
        "d": result.d,
        "ess_per_day": {
            date.isoformat(): round(float(e), 3)
            for date, e in zip(result.observed.dates, result.ess_per_day)
        },
        "flags_per_day": {
            date.isoformat(): list(flags)
            for date, flags in zip(result.observed.dates, result.day_flags)
            if flags
        },
        "seed": config.seed,
        "start_date_used": result.observed.dates[0].isoformat(),
        "trimmed_leading_days": result.start_index,
        "version": __version__,
    })
    if config.plots:
        from .plots import estimates_figure

        estimates_figure(series, outdir / "estimates.png", observed=observed)
    log.info("wrote %d estimate rows to %s", len(series), outdir)
    return EXIT_OK


def _read_estimates(path) -> dict:
    """estimates.csv -> column arrays keyed by name, dates as date objects."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    dates = [datetime.date.fromisoformat(r["date"]) for r in rows]
    out = {"date": dates}
    for name in EstimateSeries.COLUMNS[1:-1]:
        out[name] = np.array([float(r[name]) if r[name] else np.nan for r in rows])
    out["flags"] = [r["flags"] for r in rows]
    return out


def _read_scenario(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    return {
        name: np.array([float(r[name]) for r in rows]) for name in SCENARIO_COLUMNS
    }


def validate_cmd(config: RunConfig, outdir: Path, regenerate: bool) -> int:
    outdir.mkdir(parents=True, exist_ok=True)
    if regenerate:
        code = simulate_cmd(config, outdir)
        if code != EXIT_OK:
            return code
        code = estimate_cmd(config, outdir / "cases.csv", outdir)
        if code != EXIT_OK:
            return code
    scenario_path = outdir / "scenario.csv"
    estimates_path = outdir / "estimates.csv"
    for path in (scenario_path, estimates_path):
        if not path.exists():
            print(f"rtsmc: missing {path}; run simulate/estimate or pass --regenerate",
                  file=sys.stderr)
            return EXIT_INPUT

    truth = _read_scenario(scenario_path)
    est = _read_estimates(estimates_path)
    with open(outdir / "scenario_meta.json", encoding="utf-8") as fh:
        change_days = json.load(fh)["change_days"]
    epoch = config.epoch()
    est_days = np.array([(d - epoch).days for d in est["date"]])

    # align estimate rows onto scenario days
    horizon = len(truth["day"])
    cols = ("R_median", "R_lo95", "R_hi95", "j_median", "p_change",
            "C_pred_median", "C_pred_lo95", "C_pred_hi95")
    aligned = {name: np.full(horizon, np.nan) for name in cols}
    inside = (est_days >= 0) & (est_days < horizon)
    for name in cols:
        aligned[name][est_days[inside]] = est[name][inside]

    r = error_metrics(truth["R_true"], aligned["R_median"])
    j = error_metrics(truth["j_true"], aligned["j_median"])
    # skip the initialisation transient before scoring the reconstruction
    defined = np.nonzero(np.isfinite(aligned["C_pred_median"]))[0]
    skip = defined[0] + max(7, len(defined) // 10) if len(defined) else 0
    cov = coverage(truth["C_bar"][skip:], aligned["C_pred_lo95"][skip:],
                   aligned["C_pred_hi95"][skip:])
    hits = change_detection_score(
        aligned["p_change"], change_days,
        window=config.change_window, threshold=config.change_threshold,
    )

    checks = {
        "r_mean_abs_diff": (r.mean_abs_diff, "<=", config.r_mean_abs_max),
        "r_sd_diff": (r.sd_diff, "<=", config.r_sd_max),
        "c_coverage": (cov, ">=", config.c_coverage_min),
        "change_hits": (sum(h.hit for h in hits), ">=", config.change_hits_min),
    }
    failures = [
        name for name, (value, op, bound) in checks.items()
        if not (value <= bound if op == "<=" else value >= bound)
    ]
    _write_json(outdir / "metrics.json", {
        "R": {"mean_diff": r.mean_diff, "sd_diff": r.sd_diff, "mean_abs_diff": r.mean_abs_diff},
        "j": {"mean_diff": j.mean_diff, "sd_diff": j.sd_diff, "mean_abs_diff": j.mean_abs_diff},
        "c_coverage": cov,
        "change_detection": [
            {"true_day": h.true_day, "hit": h.hit, "detected_day": h.detected_day,
             "latency": h.latency}
            for h in hits
        ],
        "thresholds": {name: bound for name, (_, _, bound) in checks.items()},
        "failed": failures,
        "passed": not failures,
        "version": __version__,
    })
    if config.plots:
        from .plots import estimates_figure
        from .scenario import Scenario

        series = _series_from_columns(est)
        scen = Scenario(
            R_true=truth["R_true"], j_true=truth["j_true"],
            C_bar=truth["C_bar"], C_noisy=truth["C_noisy"],
            change_days=tuple(int(d) for d in change_days),
        )
        estimates_figure(series, outdir / "validation.png", truth=scen,
                         truth_start_date=epoch)
    if failures:
        print(f"rtsmc: validation failed: {', '.join(failures)}", file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


def _series_from_columns(est: dict) -> EstimateSeries:
    return EstimateSeries(
        dates=est["date"],
        r_median=est["R_median"], r_lo95=est["R_lo95"], r_hi95=est["R_hi95"],
        j_median=est["j_median"], j_lo95=est["j_lo95"], j_hi95=est["j_hi95"],
        p_change=est["p_change"],
        c_pred_median=est["C_pred_median"], c_pred_lo95=est["C_pred_lo95"],
        c_pred_hi95=est["C_pred_hi95"],
        flags=est["flags"],
    )


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args)
    except (OSError, RtsmcError) as exc:
        print(f"rtsmc: config error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    if args.command == "simulate":
        return simulate_cmd(config, args.output)
    if args.command == "estimate":
        return estimate_cmd(config, args.input, args.output)
    return validate_cmd(config, args.output, args.regenerate)


if __name__ == "__main__":
    sys.exit(main())
