"""Command-line experiment runner.

Exit codes: 0 on success, 1 on numerical failure, 2 on usage or configuration
errors. Errors are reported on stderr as a single JSON object.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import io as sio
from .config import ConfigError, ExperimentConfig, load_config
from .filters import ConvergenceError, FilterDivergence, run_filter
from .gof import acf_test, burn_in_slice, ks_test, time_rescale
from .model import lagged_design
from .simulation import (FILTER_KINDS, FilterSpec, Scenario, design_variance, select_gamma, study1,
                         study1_filters, study2, study2_filters, study2_scenario, to_db)
from .strf import StrfSettings, run_strf, strf_reconstruct

logger = logging.getLogger("sparse_ppf")

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
DEFAULT_CV_GRID = (0.1, 0.2, 0.3, 0.5, 0.7, 1.0, 1.5, 2.0)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sparse-ppf", description="Sparse adaptive point-process filtering experiments.")
    p.add_argument("--mode", choices=("study1", "study2", "strf", "custom"))
    p.add_argument("--config", type=Path, help="TOML experiment file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--filters", help="comma-separated subset of " + ",".join(FILTER_KINDS))
    p.add_argument("--ensemble", type=int, help="number of realizations (study1)")
    p.add_argument("--cv-grid", help="comma-separated gamma values for even/odd cross-validation")
    p.add_argument("--stride-ci", type=int, help="windows between confidence-interval refreshes")
    p.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"--{what}: {exc}") from exc


def resolve_config(args) -> ExperimentConfig:
    if args.config is not None:
        if not args.config.is_file():
            raise ConfigError(f"config file not found: {args.config}")
        cfg = load_config(args.config)
    else:
        cfg = ExperimentConfig()
    over = {}
    if args.mode:
        over["mode"] = args.mode
    if args.seed is not None:
        over["seed"] = args.seed
    if args.out is not None:
        over["out"] = str(args.out)
    if args.filters:
        over["filters"] = [f.strip() for f in args.filters.split(",") if f.strip()]
    if args.ensemble is not None:
        over["ensemble"] = args.ensemble
    if args.cv_grid:
        over["cv_grid"] = _floats(args.cv_grid, "cv-grid")
    if args.stride_ci is not None:
        over["stride_ci"] = args.stride_ci
    if args.gnuplot:
        over["gnuplot"] = True
    return replace(cfg, **over).validate()


# --------------------------------------------------------------------------- helpers

def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True, text=True,
                             cwd=Path(__file__).resolve().parent, timeout=10)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def _apply_params(base: dict[str, FilterSpec], cfg: ExperimentConfig) -> dict[str, FilterSpec]:
    specs = {}
    for name in cfg.filters:
        spec = base.get(name, FilterSpec(name))
        params = dict(cfg.filter_params.get(name, {}))
        specs[name] = replace(spec, **params)
    return specs


def _cross_validate(sc: Scenario, specs, cfg: ExperimentConfig, grid, out: Path) -> dict[str, FilterSpec]:
    """Replace ``gamma`` of ℓ1 filters without an explicit value by the CV choice."""
    pilots = np.random.SeedSequence([cfg.seed, 7919]).generate_state(cfg.cv_pilots).tolist()
    rows = []
    for name, spec in list(specs.items()):
        if spec.kind not in ("ppf0", "ppf1") or "gamma" in cfg.filter_params.get(name, {}):
            continue
        g, scores = select_gamma(sc, spec, grid, pilots)
        specs[name] = replace(spec, gamma=g)
        rows += [(name, float(gg), float(s), int(gg == g)) for gg, s in zip(sorted(grid), scores)]
        logger.info("cross-validation picked gamma=%g for %s", g, name)
    if rows:
        sio.write_table(out / "cv_scores.csv", "cv_scores", ("filter", "gamma", "heldout_loglik", "selected"), rows)
    return specs


def _scenario(cfg: ExperimentConfig, base: Scenario) -> Scenario:
    params = {k: v for k, v in cfg.scenario.items() if k != "drop_seconds"}
    return replace(base, seed=cfg.seed, **params)


def _gof_rows(name, ks, acf):
    ks_rows = [(name, float(m), float(e), float(ks.band)) for m, e in zip(ks.model_quantiles, ks.empirical_quantiles)]
    acf_rows = [(name, int(l), float(a), float(acf.band)) for l, a in zip(acf.lags, acf.acf)]
    return ks_rows, acf_rows


def _write_gof(out: Path, ks: dict, acf: dict) -> None:
    ks_rows, acf_rows, summary = [], [], []
    for name in ks:
        a, b = _gof_rows(name, ks[name], acf[name])
        ks_rows += a
        acf_rows += b
        summary.append((name, float(ks[name].statistic), float(ks[name].band), int(ks[name].passed),
                        int(acf[name].passed), int(ks[name].model_quantiles.shape[0])))
    sio.write_table(out / "ks.csv", "ks", sio.KS_COLUMNS, ks_rows)
    sio.write_table(out / "acf.csv", "acf", sio.ACF_COLUMNS, acf_rows)
    sio.write_table(out / "gof_summary.csv", "gof_summary",
                    ("filter", "ks_statistic", "ks_band", "ks_pass", "acf_pass", "n_intervals"), summary)


GNUPLOT = {
    "study1": """set datafile separator ','
set key autotitle columnhead
set xlabel 'window k'
set ylabel 'MSE (dB)'
plot for [s in "{series}"] 'learning_curves.csv' using 1:(strcol(2) eq s."_mse_db" ? $3 : 1/0) with lines title s
""",
    "study2": """set datafile separator ','
set xlabel 'window k'
plot for [s in "{series}"] 'trajectories.csv' using 1:(strcol(2) eq s."_w1" ? $3 : 1/0) with lines title s
""",
    "strf": """set datafile separator ','
set view map
plot 'strf_snapshot_final.csv' matrix skip 2 with image
""",
    "custom": """set datafile separator ','
plot for [s in "{series}"] 'estimates.csv' using 1:(strcol(2) eq s."_w0" ? $3 : 1/0) with lines title s
""",
}


# --------------------------------------------------------------------------- modes

def run_study1(cfg: ExperimentConfig, out: Path) -> dict:
    sc = _scenario(cfg, Scenario())
    specs = _apply_params(study1_filters(), cfg)
    grid = cfg.cv_grid if cfg.cv_grid is not None else DEFAULT_CV_GRID
    specs = _cross_validate(sc, specs, cfg, grid, out)
    res = study1(sc, specs, cfg.ensemble, cfg.record_every, cfg.workers)
    series = {}
    for f in res.filters:
        series[f"{f}_mse_db"] = (res.k, to_db(res.mse_curve(f)))
        series[f"{f}_spm_db"] = (res.k, to_db(res.spm_curve(f)))
    sio.write_series(out / "learning_curves.csv", "learning_curves", series)
    rows = [(f, float(to_db(res.steady_state(f))), float(to_db(res.steady_state(f, "spm"))),
             float(specs[f].gamma), float(specs[f].beta)) for f in res.filters]
    sio.write_table(out / "steady_state.csv", "steady_state",
                    ("filter", "mse_db", "spm_db", "gamma", "beta"), rows)
    return {"steady_state": {r[0]: {"mse_db": r[1], "spm_db": r[2], "gamma": r[3]} for r in rows}}


def run_study2(cfg: ExperimentConfig, out: Path) -> dict:
    base = study2_scenario(K=cfg.scenario.get("K", 60000), seed=cfg.seed,
                           drop_seconds=cfg.scenario.get("drop_seconds", 1.0))
    if {"W", "delta"} & cfg.scenario.keys():
        raise ConfigError("study2 fixes W=1 and delta=1 ms; change K or drop_seconds instead")
    sc = _scenario(cfg, base)
    specs = _apply_params(study2_filters(), cfg)
    if cfg.cv_grid is not None:
        specs = _cross_validate(sc, specs, cfg, cfg.cv_grid, out)
    gof = cfg.gof
    res = study2(sc, specs, cfg.record_every, ci_filters=("ppf1", "ppf0"), ci_coords=(1,),
                 ci_stride=cfg.stride_ci, burn_in=gof.get("burn_in", 0.05), max_lag=gof.get("max_lag", 20),
                 jitter=gof.get("jitter", True))
    support = [int(c) for c in sc.support]
    series = {}
    for c in support:
        series[f"truth_w{c}"] = (res.k, res.truth[:, c])
    off = np.ones(sc.M, dtype=bool)
    off[support] = False
    off[0] = False
    for f, h in res.history.items():
        series[f"{f}_w0"] = (res.k, h[:, 0])
        for c in support:
            series[f"{f}_w{c}"] = (res.k, h[:, c])
        series[f"{f}_offsupport_l2"] = (res.k, np.linalg.norm(h[:, off], axis=1))
    if res.ssppf_sd is not None:
        h = res.history["ssppf"]
        for c in support:
            series[f"ssppf_w{c}_lo"] = (res.k, h[:, c] - 1.959963984540054 * res.ssppf_sd[:, c])
            series[f"ssppf_w{c}_hi"] = (res.k, h[:, c] + 1.959963984540054 * res.ssppf_sd[:, c])
    sio.write_series(out / "trajectories.csv", "trajectories", series)
    rows = []
    dt = sc.W * sc.delta
    for f, ivs in res.intervals.items():
        truth = res.realization.omega_at([r.window for r in ivs]) if ivs else np.zeros((0, sc.M))
        for r, t in zip(ivs, truth):
            rows.append((f, r.window, r.window * dt, r.coord, r.w_hat, r.w_desparsified, r.sigma_hat, r.lo, r.hi,
                         r.level, float(t[r.coord]), r.caveat))
    sio.write_table(out / "confidence.csv", "confidence", sio.INTERVAL_COLUMNS, rows)
    _write_gof(out, res.ks, res.acf)
    # rate estimates over a short stretch of the second half
    real = res.realization
    lo, hi = int(round(34.2 / sc.delta)), int(round(34.4 / sc.delta))
    lo, hi = min(lo, real.spikes.shape[0] - 1), min(hi, real.spikes.shape[0])
    t = np.arange(lo, hi) * sc.delta
    rates = {"true": (t, real.lam[lo:hi]), "spikes": (t, real.spikes[lo:hi])}
    for f, lam in res.lam_pred.items():
        rates[f] = (t, lam[lo:hi])
    rates["nrc"] = (t, real.X[lo:hi] @ res.nrc)
    sio.write_series(out / "rates.csv", "rates", rates)
    return {"ks_pass": {f: bool(v.passed) for f, v in res.ks.items()},
            "acf_pass": {f: bool(v.passed) for f, v in res.acf.items()},
            "gammas": {f: s.gamma for f, s in specs.items()}}


def run_strf_mode(cfg: ExperimentConfig, out: Path) -> dict:
    params = dict(cfg.strf)
    spec_path = params.pop("spectrogram", None)
    spikes_path = params.pop("spikes", None)
    snaps = params.pop("snapshot_times", None)
    traces = params.pop("trace_points", [])
    if "atoms" in params:
        params["atoms"] = tuple(tuple(a) for a in params["atoms"])
    settings = StrfSettings(**params)
    spec = sio.read_spectrogram(spec_path) if spec_path else None
    spikes = sio.read_spikes(spikes_path).bins if spikes_path else None
    res = run_strf(settings, np.random.SeedSequence(cfg.seed), spec, spikes)
    snaps = snaps if snaps is not None else [res.times[-1] / 4, res.times[-1] / 2, res.times[-1]]
    files = []
    for ts in snaps:
        name = f"strf_snapshot_{float(ts):.3f}s.csv"
        sio.write_matrix(out / name, "strf_snapshot", res.snapshot(float(ts)))
        files.append(name)
    sio.write_matrix(out / "strf_snapshot_final.csv", "strf_snapshot", res.snapshot(res.times[-1]))
    if traces:
        trace = {}
        full = strf_reconstruct(res.xi_path, res.dictionary)
        for lag, freq in traces:
            trace[f"lag{int(lag)}_freq{int(freq)}"] = (res.times, full[:, int(lag), int(freq)])
        sio.write_series(out / "strf_traces.csv", "strf_traces", trace)
    top = res.top_atoms(min(5, res.xi.shape[0]))
    sio.write_table(out / "strf_atoms.csv", "strf_atoms", ("atom", "row", "col", "xi"),
                    [(int(p), int(p) // settings.grid_cols, int(p) % settings.grid_cols, float(res.xi[p])) for p in top])
    summary = {"step_size": res.step_size, "top_atoms": [int(p) for p in res.top_atoms(2)]}
    if res.xi_true is not None:
        summary["correlation"] = res.correlation()
    return summary


def run_custom(cfg: ExperimentConfig, out: Path) -> dict:
    c = cfg.custom
    train = sio.read_spikes(c["spikes"])
    stim = sio.read_stimulus(c["stimulus"])
    M, W = int(c["M"]), int(c.get("W", 1))
    X = lagged_design(stim, M)
    n = train.bins.astype(float)
    if X.shape[0] != n.shape[0]:
        raise ConfigError(f"stimulus covers {X.shape[0]} bins but the spike train has {n.shape[0]}")
    T = n.shape[0] - n.shape[0] % W
    X, n = X[:T], n[:T]
    specs = _apply_params({}, cfg)
    sbar = design_variance(X)
    info = float(np.mean(n) * (1 - np.mean(n)))
    series, ks, acf = {}, {}, {}
    keep = burn_in_slice(T, cfg.gof.get("burn_in", 0.05))
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    for name, spec in specs.items():
        res = run_filter(spec.make_state(M, W, sbar, info), X, n, W, cfg.record_every)
        k = np.arange(1, res.history.shape[0] + 1) * cfg.record_every
        for m in range(M):
            series[f"{name}_w{m}"] = (k, res.history[:, m])
        z = time_rescale(n[keep], np.clip(res.lam_pred[keep], 1e-12, 1 - 1e-12), cfg.gof.get("jitter", True), rng)
        ks[name] = ks_test(z)
        acf[name] = acf_test(z, cfg.gof.get("max_lag", 20))
    sio.write_series(out / "estimates.csv", "estimates", series)
    _write_gof(out, ks, acf)
    return {"ks_pass": {f: bool(v.passed) for f, v in ks.items()}}


MODES = {"study1": run_study1, "study2": run_study2, "strf": run_strf_mode, "custom": run_custom}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(cfg: ExperimentConfig) -> dict:
    """Execute one configured experiment and write its outputs plus a manifest."""
    out = Path(sio.ensure_dir(cfg.out))
    t0 = time.perf_counter()
    summary = MODES[cfg.mode](cfg, out)
    wall = time.perf_counter() - t0
    if cfg.gnuplot:
        (out / "plot.gp").write_text(GNUPLOT[cfg.mode].format(series=" ".join(cfg.filters)))
    outputs = sorted(p.name for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    manifest = {
        "mode": cfg.mode,
        "seed": cfg.seed,
        "config": dataclasses.asdict(cfg),
        "git_describe": _git_describe(),
        "wall_time_s": wall,
        "schema_version": sio.SCHEMA_VERSION,
        "outputs": {name: _sha256(out / name) for name in outputs},
        "summary": summary,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n")
    return manifest


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        run(cfg)
    except (UsageError, ConfigError) as exc:
        return _fail(EXIT_USAGE, "config", str(exc))
    except FileNotFoundError as exc:
        return _fail(EXIT_USAGE, "config", f"file not found: {exc.filename}")
    except (FilterDivergence, ConvergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_NUMERIC, "numerical", str(exc))
    except ValueError as exc:
        return _fail(EXIT_NUMERIC, "numerical", str(exc))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
