"""Batch command line: sampling, moment curves, transport costs, scaling studies.

Verbs: sample, moments, wasserstein, multiscale, lowerbound, scaling, report.
Exit codes: 0 ok, 2 config error, 3 numeric failure, 4 ceiling exceeded.
HYPERWASS_LOG sets the log level (name or number).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import multiprocessing
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import resources

import jsonschema
import numpy as np
import scipy.stats

from .certificates import NRunAggregate, corollary_sandwich, lower_bound
from .config import ExperimentConfig, config_to_dict, load_config
from .errors import CeilingError, ConfigError, HyperwassError
from .geometry import EUCLIDEAN, TORUS, build_dyadic_grid, cube_for_count
from .moments import classify_hyperuniformity, estimate_moment_curve, fit_envelope
from .multiscale import (
    analytic_scale_costs,
    build_ladder,
    combine_reports,
    constructive_upper_bound,
    good_event_diagnostics,
    theorem_bound,
)
from .processes import (
    mean_count,
    mean_density_for,
    read_points,
    sample,
    uniform_mean,
    write_points,
)
from .plotting import scaling_svg
from .transport import SUPPORT_CEILING, semidiscrete_wp

_log = logging.getLogger("hyperwass")

try:
    from importlib.metadata import version as _dist_version

    __version__ = _dist_version("hyperwass")
except Exception:  # not installed; running from a checkout
    __version__ = "0"


def _setup_logging():
    raw = os.environ.get("HYPERWASS_LOG", "WARNING").upper()
    level = getattr(logging, raw, None)
    if not isinstance(level, int):
        try:
            level = int(raw)
        except ValueError:
            level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------------------
# Regression helpers

@dataclass(frozen=True)
class SlopeFit:
    """Weighted log-log line with a 95% confidence interval on the slope."""

    slope: float
    intercept: float
    stderr: float
    ci: tuple
    points_used: int
    excluded: int


def _log_weights(costs: np.ndarray, stderrs) -> np.ndarray:
    # regression runs on ln cost, whose s.e. is se/cost by the delta method
    if stderrs is None:
        return np.ones_like(costs)
    se = np.asarray(stderrs, dtype=float)
    if np.all(np.isfinite(se)) and np.all(se > 0):
        return (costs / se) ** 2
    _log.debug("missing or zero standard errors; falling back to equal weights")
    return np.ones_like(costs)


def _wls(x: np.ndarray, y: np.ndarray, w: np.ndarray):
    W = w.sum()
    xb = float(w @ x) / W
    yb = float(w @ y) / W
    sxx = float(w @ (x - xb) ** 2)
    if sxx <= 0:
        raise ValueError("regression needs at least two distinct abscissae")
    slope = float(w @ ((x - xb) * (y - yb))) / sxx
    intercept = yb - slope * xb
    resid = y - intercept - slope * x
    dof = len(x) - 2
    s2 = float(w @ resid**2) / dof if dof > 0 else 0.0
    se = math.sqrt(max(s2, 0.0) / sxx)
    return slope, intercept, se, dof


def fit_slope(ns, costs, stderrs=None) -> SlopeFit:
    """Weighted least squares of ln cost on ln N with a 95% CI.

    Rows with nonpositive cost are excluded with a warning; at least three
    usable rows are required.
    """
    ns = np.asarray(ns, dtype=float)
    costs = np.asarray(costs, dtype=float)
    keep = costs > 0
    excluded = int((~keep).sum())
    if excluded:
        _log.warning("fit_slope: excluding %d row(s) with nonpositive cost", excluded)
    if keep.sum() < 3:
        raise ValueError(f"slope fit needs >= 3 positive-cost rows, got {int(keep.sum())}")
    x = np.log(ns[keep])
    y = np.log(costs[keep])
    w = _log_weights(costs[keep], None if stderrs is None else np.asarray(stderrs)[keep])
    slope, intercept, se, dof = _wls(x, y, w)
    tcrit = float(scipy.stats.t.ppf(0.975, dof)) if dof > 0 else 0.0
    ci = (slope - tcrit * se, slope + tcrit * se)
    return SlopeFit(
        slope=slope,
        intercept=intercept,
        stderr=se,
        ci=ci,
        points_used=int(keep.sum()),
        excluded=excluded,
    )


@dataclass(frozen=True)
class LogCorrectionFit:
    """Pure-linear vs log-corrected cost models, compared in log space.

    Both comparison models have one free constant: cost = c N and
    cost = c N (ln N)^(p/2). The free-exponent column reports b from
    cost = c N (ln N)^b with its standard error.
    """

    p: float
    coefficient: float
    coefficient_stderr: float
    linear_rss: float
    log_rss: float
    preferred: str
    points_used: int


def log_correction_fit(ns, costs, p, stderrs=None) -> LogCorrectionFit:
    ns = np.asarray(ns, dtype=float)
    costs = np.asarray(costs, dtype=float)
    keep = (costs > 0) & (ns > 1.0)
    if keep.sum() < 3:
        raise ValueError(f"log-correction fit needs >= 3 usable rows, got {int(keep.sum())}")
    x = np.log(ns[keep])
    z = np.log(costs[keep]) - x
    w = _log_weights(costs[keep], None if stderrs is None else np.asarray(stderrs)[keep])
    W = w.sum()

    zbar = float(w @ z) / W
    rss_linear = float(w @ (z - zbar) ** 2)

    u = (p / 2.0) * np.log(x)
    t = z - u
    tbar = float(w @ t) / W
    rss_log = float(w @ (t - tbar) ** 2)

    b, _, b_se, _ = _wls(np.log(x), z, w)
    preferred = "log_corrected" if rss_log < rss_linear else "linear"
    return LogCorrectionFit(
        p=float(p),
        coefficient=b,
        coefficient_stderr=b_se,
        linear_rss=rss_linear,
        log_rss=rss_log,
        preferred=preferred,
        points_used=int(keep.sum()),
    )


# ---------------------------------------------------------------------------
# Experiment runner

def _replicate_task(task):
    """One replicate of the constructive bound; None if a ceiling was hit."""
    spec, cube, p, q, threshold, replicate = task
    try:
        ps = sample(spec, cube, replicate=replicate)
        density = mean_density_for(spec, cube)
        ladder = build_ladder(ps, density)
        rep = constructive_upper_bound(ladder, p, q=q, threshold=threshold)
    except CeilingError as exc:
        _log.warning("replicate %d skipped: %s", replicate, exc)
        return None
    return float(rep.total), float(np.sum(rep.raw_cost)), int(ladder.count)


def _run_tasks(tasks, jobs: int):
    if jobs <= 1:
        return [_replicate_task(t) for t in tasks]
    ctx = None
    if "fork" in multiprocessing.get_all_start_methods():
        ctx = multiprocessing.get_context("fork")  # workers inherit warm jit state
    with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
        return list(pool.map(_replicate_task, tasks))


def _envelope_dict(env) -> dict:
    out = {
        "form": env.form,
        "gamma": float(env.gamma),
        "epsilon": float(env.epsilon),
        "r": float(env.r),
        "degenerate": bool(env.degenerate),
    }
    if env.knots is not None:
        out["knots"] = [float(v) for v in env.knots]
        out["values"] = [float(v) for v in env.values]
    return out


def _classification_dict(cls) -> dict:
    return {
        "beta": float(cls.beta),
        "beta_se": float(cls.beta_se),
        "ci": [float(cls.ci[0]), float(cls.ci[1])],
        "classification": cls.classification,
        "log_factor_detected": bool(cls.log_factor_detected),
        "degenerate": bool(cls.degenerate),
    }


def _sandwich_dict(rep) -> dict:
    return {
        "delta_paper": float(rep.delta_paper),
        "delta_empirical": float(rep.delta_empirical),
        "lower_paper_vacuous": bool(rep.rows[0].lower_paper_vacuous) if rep.rows else None,
        "all_within": bool(rep.all_within),
        "rows": [
            {
                "N": float(r.N),
                "ratio": float(r.ratio),
                "lower_paper": float(r.lower_paper),
                "lower_empirical": float(r.lower_empirical),
                "empirical_good_fraction": float(r.empirical_good_fraction),
                "upper": float(r.upper),
                "within": bool(r.within),
                "crude_regime": bool(r.crude_regime),
            }
            for r in rep.rows
        ],
    }


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> dict:
    """Replicated scaling study; writes results.csv, report.json, scaling.svg.

    Deterministic given the config seed (the report's created field is the
    lone exception). Replicates that trip a solver ceiling are logged and
    skipped, never fatal.
    """
    cfg.validate(scaling=True)
    outdir = cfg.directory
    os.makedirs(outdir, exist_ok=True)
    d = cfg.dimension
    runs = []
    for p in cfg.p_values:
        n_max = max(cfg.n_values)
        n_env = min(float(n_max), 4096.0)
        cube_env = cube_for_count(n_env, d, cfg.metric)
        spec_env = cfg.process_spec(n_env)
        areas = cfg.default_window_areas(cube_env.volume)
        _log.info("p=%g: moment pre-pass at N=%g over %d areas", p, n_env, len(areas))
        curve = estimate_moment_curve(
            spec_env,
            cube_env,
            p,
            areas,
            replicates=cfg.moment_replicates,
            windows=cfg.moment_windows,
        )
        envelope = fit_envelope(curve, cfg.envelope_form)
        classification = None
        if p == 2.0 and d == 2:
            try:
                classification = classify_hyperuniformity(curve)
            except ValueError as exc:
                _log.info("classification skipped: %s", exc)

        cube0 = cube_for_count(cfg.n_values[0], d, cfg.metric)
        dens0 = mean_density_for(cfg.process_spec(cfg.n_values[0]), cube0)
        a_eff = cfg.density_lower if cfg.density_lower is not None else dens0.a
        A_eff = cfg.density_upper if cfg.density_upper is not None else dens0.A

        rows = []
        aggregates = []
        for N in cfg.n_values:
            cube = cube_for_count(N, d, cfg.metric)
            spec = cfg.process_spec(N)
            tasks = [
                (spec, cube, p, cfg.q, cfg.good_event_threshold, r)
                for r in range(cfg.replicates)
            ]
            results = _run_tasks(tasks, jobs)
            ok = [r for r in results if r is not None]
            if len(ok) < len(results):
                _log.warning(
                    "N=%g: %d replicate(s) hit a ceiling and were skipped",
                    N,
                    len(results) - len(ok),
                )
            if not ok:
                _log.warning("N=%g: no replicates completed; row dropped", N)
                continue
            totals = np.array([t for t, _, _ in ok])
            raws = np.array([rw for _, rw, _ in ok])
            counts = np.array([c for _, _, c in ok])

            analytic_total = None
            try:
                ps0 = sample(spec, cube, replicate=0)
                ladder0 = build_ladder(ps0, mean_density_for(spec, cube))
                analytic_total = analytic_scale_costs(
                    ladder0, envelope, p, a=a_eff, A=A_eff, theta_p=cfg.theta_p
                ).analytic_total
            except (ValueError, CeilingError) as exc:
                _log.info("N=%g: analytic column unavailable (%s)", N, exc)

            n_nominal = mean_count(spec, cube)
            theorem = theorem_bound(n_nominal, p, a_eff, A_eff, envelope, cfg.theta_p).value
            stderr = float(totals.std(ddof=1) / math.sqrt(len(totals))) if len(totals) > 1 else 0.0
            rows.append(
                {
                    "N": float(n_nominal),
                    "replicates": len(ok),
                    "mean_cost": float(totals.mean()),
                    "stderr": stderr,
                    "mean_raw_cost": float(raws.mean()),
                    "mean_count": float(counts.mean()),
                    "analytic_total": analytic_total,
                    "theorem_bound": float(theorem),
                }
            )
            aggregates.append(NRunAggregate(N=float(n_nominal), costs=totals, counts=counts))

        slope = None
        logfit = None
        if len(rows) >= 3:
            ns = [r["N"] for r in rows]
            means = [r["mean_cost"] for r in rows]
            ses = [r["stderr"] for r in rows]
            try:
                s = fit_slope(ns, means, ses)
                slope = {
                    "slope": s.slope,
                    "intercept": s.intercept,
                    "stderr": s.stderr,
                    "ci_low": s.ci[0],
                    "ci_high": s.ci[1],
                    "points_used": s.points_used,
                }
            except ValueError as exc:
                _log.warning("p=%g: slope fit unavailable (%s)", p, exc)
            try:
                lf = log_correction_fit(ns, means, p, ses)
                logfit = {
                    "coefficient": lf.coefficient,
                    "coefficient_stderr": lf.coefficient_stderr,
                    "linear_rss": lf.linear_rss,
                    "log_rss": lf.log_rss,
                    "preferred": lf.preferred,
                }
            except ValueError as exc:
                _log.warning("p=%g: log-correction fit unavailable (%s)", p, exc)
        else:
            _log.warning("p=%g: only %d row(s) completed; no slope fit", p, len(rows))

        sandwich = None
        try:
            sandwich = _sandwich_dict(
                corollary_sandwich(aggregates, p, d, a_eff, A_eff, envelope, cfg.theta_p)
            )
        except ValueError as exc:
            _log.warning("p=%g: sandwich unavailable (%s)", p, exc)

        runs.append(
            {
                "p": float(p),
                "family": cfg.family,
                "dimension": d,
                "a": float(a_eff),
                "A": float(A_eff),
                "rows": rows,
                "slope": slope,
                "log_correction": logfit,
                "envelope": _envelope_dict(envelope),
                "classification": None if classification is None else _classification_dict(classification),
                "sandwich": sandwich,
                "moment_curve": {
                    "areas": [float(v) for v in curve.areas],
                    "moments": [float(v) for v in curve.moments],
                    "stderrs": [float(v) for v in curve.stderrs],
                    "replicates": curve.replicates,
                    "windows": curve.windows,
                },
            }
        )

    report = {
        "schema_version": 1,
        "tool": f"hyperwass {__version__}",
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "seed": cfg.seed,
        "config": config_to_dict(cfg),
        "runs": runs,
    }
    jsonschema.validate(report, _load_schema())
    _write_results_csv(os.path.join(outdir, cfg.results_csv), report)
    _write_json(os.path.join(outdir, cfg.report_json), report)
    if cfg.svg:
        series = []
        for run in runs:
            if not run["rows"]:
                continue
            fit = None
            if run["slope"] is not None:
                fit = (run["slope"]["slope"], run["slope"]["intercept"])
            series.append(
                {
                    "name": f"{run['family']} p={run['p']:g}",
                    "ns": [r["N"] for r in run["rows"]],
                    "means": [r["mean_cost"] for r in run["rows"]],
                    "fit": fit,
                }
            )
        if series:
            scaling_svg(os.path.join(outdir, cfg.svg_name), series, title=f"{cfg.family} scaling")
    return report


def _write_results_csv(path: str, report: dict):
    cols = (
        "family",
        "p",
        "N",
        "replicates",
        "mean_cost",
        "stderr",
        "mean_raw_cost",
        "mean_count",
        "analytic_total",
        "theorem_bound",
    )

    def fmt(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return f"{v:.17g}"
        return str(v)

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for run in report["runs"]:
            for row in run["rows"]:
                writer.writerow(
                    [fmt(run["family"]), fmt(run["p"])]
                    + [fmt(row[c]) for c in cols[2:]]
                )


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def _write_json(path: str, payload: dict):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _load_schema() -> dict:
    ref = resources.files("hyperwass").joinpath("schemas/report.schema.json")
    with ref.open("r", encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# Verbs

def _effective_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "dimension", None) is not None:
        cfg.dimension = args.dimension
    if getattr(args, "metric", None) is not None:
        cfg.metric = args.metric
    if getattr(args, "p", None) is not None:
        cfg.p_values = (args.p,)
    if getattr(args, "out", None) is not None:
        cfg.directory = args.out
    cfg.validate()
    return cfg


def _outdir(cfg: ExperimentConfig) -> str:
    os.makedirs(cfg.directory, exist_ok=True)
    return cfg.directory


def _print_json(payload: dict):
    print(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))


def _pick_count(args, cfg, cap: float | None = None) -> float:
    n = args.count if getattr(args, "count", None) is not None else max(cfg.n_values)
    if cap is not None:
        n = min(float(n), cap)
    if n <= 0:
        raise ConfigError(f"--count must be positive, got {n}")
    return float(n)


def cmd_sample(args) -> int:
    cfg = _effective_config(args)
    if cfg.family == "external_file":
        raise ConfigError("process.family: external_file points are ingested, not sampled")
    n = _pick_count(args, cfg)
    cube = cube_for_count(n, cfg.dimension, cfg.metric)
    ps = sample(cfg.process_spec(n), cube, replicate=args.replicate)
    path = os.path.join(_outdir(cfg), "points.csv")
    write_points(ps, path)
    print(f"wrote {ps.count} points (d={cfg.dimension}, side={cube.side:g}) to {path}")
    return 0


def cmd_moments(args) -> int:
    cfg = _effective_config(args)
    p = cfg.p_values[0]
    n = _pick_count(args, cfg, cap=4096.0)
    cube = cube_for_count(n, cfg.dimension, cfg.metric)
    spec = cfg.process_spec(n)
    areas = cfg.default_window_areas(cube.volume)
    curve = estimate_moment_curve(
        spec, cube, p, areas, replicates=cfg.moment_replicates, windows=cfg.moment_windows
    )
    envelope = fit_envelope(curve, cfg.envelope_form)
    payload = {
        "p": p,
        "N": cube.volume,
        "areas": list(curve.areas),
        "moments": list(curve.moments),
        "stderrs": list(curve.stderrs),
        "envelope": _envelope_dict(envelope),
    }
    if p == 2.0 and cfg.dimension == 2:
        try:
            payload["classification"] = _classification_dict(classify_hyperuniformity(curve))
        except ValueError as exc:
            _log.info("classification skipped: %s", exc)
    path = os.path.join(_outdir(cfg), "moments.csv")
    curve.to_csv(path)
    _print_json(payload)
    return 0


def _default_quantization_level(cube, q: int) -> int:
    grid = build_dyadic_grid(cube)
    cap = int(math.floor(math.log2(SUPPORT_CEILING) / cube.dimension))
    return max(1, min(grid.depth + q, cap))


def _configured_points(args, cfg):
    """PointSet and mean density per the config, sampled or ingested."""
    if cfg.family == "external_file":
        ps = read_points(cfg.path, metric=cfg.metric)
        density = uniform_mean(ps.cube, rate=ps.count / ps.cube.volume)
        return ps, density, None
    n = _pick_count(args, cfg)
    cube = cube_for_count(n, cfg.dimension, cfg.metric)
    spec = cfg.process_spec(n)
    ps = sample(spec, cube, replicate=args.replicate)
    return ps, mean_density_for(spec, cube), spec


def cmd_wasserstein(args) -> int:
    cfg = _effective_config(args)
    p = cfg.p_values[0]
    ps, density, _ = _configured_points(args, cfg)
    level = args.level
    if level is None:
        level = cfg.semidiscrete_level
    if level is None:
        level = _default_quantization_level(ps.cube, cfg.q)
    est = semidiscrete_wp(ps, density, p, level)
    _print_json(
        {
            "p": est.p,
            "count": ps.count,
            "level": est.level,
            "quantized_cost": est.quantized_cost,
            "offset": est.offset,
            "lower": est.lower,
            "upper": est.upper,
            "width": est.width,
        }
    )
    return 0


def cmd_multiscale(args) -> int:
    cfg = _effective_config(args)
    p = cfg.p_values[0]
    ps, density, spec = _configured_points(args, cfg)
    ladder = build_ladder(ps, density)
    report = constructive_upper_bound(ladder, p, q=cfg.q, threshold=cfg.good_event_threshold)
    payload = {"constructive": report.to_dict(), "theorem": None, "good_event": None}

    envelope = None
    if spec is not None:
        n_env = min(ps.cube.volume, 4096.0)
        cube_env = cube_for_count(n_env, cfg.dimension, cfg.metric)
        curve = estimate_moment_curve(
            cfg.process_spec(n_env),
            cube_env,
            p,
            cfg.default_window_areas(cube_env.volume),
            replicates=cfg.moment_replicates,
            windows=cfg.moment_windows,
        )
        envelope = fit_envelope(curve, cfg.envelope_form)
    else:
        _log.info("external points: no resampling, so no envelope or analytic column")

    if envelope is not None:
        a_eff = cfg.density_lower if cfg.density_lower is not None else density.a
        A_eff = cfg.density_upper if cfg.density_upper is not None else density.A
        try:
            analytic = analytic_scale_costs(
                ladder, envelope, p, a=a_eff, A=A_eff, theta_p=cfg.theta_p
            )
            payload["constructive"] = combine_reports(report, analytic).to_dict()
        except ValueError as exc:
            _log.warning("analytic column unavailable (%s)", exc)
        thm = theorem_bound(ladder.mean_total, p, a_eff, A_eff, envelope, cfg.theta_p)
        payload["theorem"] = {
            "N": thm.N,
            "p": thm.p,
            "a": thm.a,
            "A": thm.A,
            "theta_p": thm.theta_p,
            "form": thm.form,
            "integral": thm.integral,
            "c_p": thm.c_p,
            "value": thm.value,
        }
        payload["envelope"] = _envelope_dict(envelope)

    diag = good_event_diagnostics(ladder, envelope, p=p, threshold=cfg.good_event_threshold)
    payload["good_event"] = {
        "levels": [int(v) for v in diag.levels],
        "cells": [int(v) for v in diag.cells],
        "failures": [int(v) for v in diag.failures],
        "frequencies": [float(v) for v in diag.frequencies],
        "predictions": None
        if diag.predictions is None
        else [float(v) for v in diag.predictions],
        "threshold": diag.threshold,
    }
    _write_json(os.path.join(_outdir(cfg), "multiscale.json"), payload)
    _print_json(payload)
    return 0


def cmd_lowerbound(args) -> int:
    cfg = _effective_config(args)
    p = cfg.p_values[0]
    n = int(_pick_count(args, cfg))
    A = cfg.density_upper if cfg.density_upper is not None else 1.0
    cert = lower_bound(cfg.dimension, p, n, A)
    _print_json(
        {
            "dimension": cert.d,
            "p": cert.p,
            "n": cert.n,
            "A": cert.A,
            "surface_unit_ball": cert.surface,
            "c_star": cert.c_star,
            "objective_at_c_star": cert.objective_at_c_star,
            "w1_bound": cert.w1_bound,
            "wp_bound": cert.wp_bound,
        }
    )
    return 0


def cmd_scaling(args) -> int:
    cfg = _effective_config(args)
    report = run_experiment(cfg, jobs=args.jobs)
    for run in report["runs"]:
        line = f"p={run['p']:g} family={run['family']} rows={len(run['rows'])}"
        if run["slope"] is not None:
            s = run["slope"]
            line += f" slope={s['slope']:.3f} ci95=[{s['ci_low']:.3f}, {s['ci_high']:.3f}]"
        if run["log_correction"] is not None:
            line += f" log_model={run['log_correction']['preferred']}"
        print(line)
    print(f"artifacts in {cfg.directory}: {cfg.results_csv}, {cfg.report_json}" + (f", {cfg.svg_name}" if cfg.svg else ""))
    return 0


def cmd_report(args) -> int:
    path = args.path
    if path is None:
        base = args.out if args.out is not None else "."
        path = os.path.join(base, "report.json")
    if not os.path.exists(path):
        raise ConfigError(f"report file not found: {path}")
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    try:
        jsonschema.validate(payload, _load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(s) for s in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: schema violation at {where}: {exc.message}") from exc
    n_runs = len(payload.get("runs", []))
    print(f"ok: {path} conforms to report schema v{payload.get('schema_version')} ({n_runs} run(s))")
    return 0


# ---------------------------------------------------------------------------
# Parser and entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI experiment config")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for replicates")
    common.add_argument("--out", help="output directory")
    common.add_argument("--dimension", type=int, help="override the ambient dimension")
    common.add_argument("--p", type=float, help="override the transport order")
    common.add_argument("--metric", choices=(EUCLIDEAN, TORUS), help="override the ground metric")

    parser = argparse.ArgumentParser(
        prog="hyperwass",
        description="Point-process transport costs: sampling, envelopes, certified bounds, scaling studies.",
    )
    parser.add_argument("--version", action="version", version=f"hyperwass {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    sp = sub.add_parser("sample", parents=[common], help="draw one configuration, write points.csv")
    sp.add_argument("--count", type=float, help="population size (default: largest n_values)")
    sp.add_argument("--replicate", type=int, default=0, help="replicate index")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("moments", parents=[common], help="estimate a moment curve and fit an envelope")
    sp.add_argument("--count", type=float, help="population size for the estimate")
    sp.set_defaults(func=cmd_moments)

    sp = sub.add_parser("wasserstein", parents=[common], help="certified semidiscrete cost sandwich")
    sp.add_argument("--count", type=float, help="population size (default: largest n_values)")
    sp.add_argument("--replicate", type=int, default=0, help="replicate index")
    sp.add_argument("--level", type=int, help="quantization level for the density")
    sp.set_defaults(func=cmd_wasserstein)

    sp = sub.add_parser("multiscale", parents=[common], help="interpolation-ladder bound report")
    sp.add_argument("--count", type=float, help="population size (default: largest n_values)")
    sp.add_argument("--replicate", type=int, default=0, help="replicate index")
    sp.set_defaults(func=cmd_multiscale)

    sp = sub.add_parser("lowerbound", parents=[common], help="deterministic cone-dual lower bound")
    sp.add_argument("--count", type=float, help="number of points n")
    sp.set_defaults(func=cmd_lowerbound)

    sp = sub.add_parser("scaling", parents=[common], help="replicated scaling study with slope fits")
    sp.set_defaults(func=cmd_scaling)

    sp = sub.add_parser("report", parents=[common], help="validate a report.json against the schema")
    sp.add_argument("path", nargs="?", help="report file (default: <out>/report.json)")
    sp.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CeilingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (HyperwassError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
