"""Monte Carlo experiment driver with CSV reporting.

Every trial draws its scenario from a random stream keyed by
``(seed, trial)``, so the same trial index sees the same DoAs and source
powers at every sweep point (paired comparisons). Noise and signal
realisations use a stream keyed by ``(seed, trial, point)``.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .estimators import (
    GLS_OVERSAMPLING,
    SSR_OVERSAMPLING,
    Dictionary,
    GridSpec,
    gls_grid_search,
    hybrid_estimate,
    mvdr_estimate,
    ssr_alternating,
    ssr_estimate,
)
from .estimators.ssr import DEFAULT_ITERATIONS
from .geometry import ArrayGeometry, SubarrayScheme
from .metrics import accuracy, empirical_cdf, periodic_error, pooled_rmspe, top_quantile_rmspe
from .model_order import covnet_select, mdl_select
from .neural.checkpoint import load_checkpoint
from .neural.training import mcenet_predict
from .results import Estimate
from .simulation import ScenarioRanges, draw_scenario, sample_covariances, synthesize_snapshots
from .sml import genie_ml

OUTPUT_ENV = "SUBARRAY_DOA_OUTPUT"
CSV_SCHEMA = 1

METHODS = (
    "ssr",
    "hybrid-ssr",
    "gls",
    "hybrid-gls",
    "mvdr",
    "hybrid-mvdr",
    "mcenet",
    "hybrid-mcenet",
    "genie",
)
ORDER_METHODS = ("mdl", "covnet")


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "results"))


@dataclass
class RunConfig:
    """Settings of one experiment.

    List-valued ``num_snapshots``, ``snr_db`` and ``rho`` span a sweep
    grid; every combination is one sweep point. If ``snr_range`` is set,
    each trial draws its SNR uniformly (in dB) from it instead.
    """

    num_antennas: int = 9
    radius_over_wavelength: float = 1.0
    scheme: str = "default"
    num_sources: int = 3
    max_order: int = 3
    num_snapshots: list = field(default_factory=lambda: [10])
    snr_db: list = field(default_factory=lambda: [20.0])
    snr_range: list | None = None
    correlation: str = "uncorrelated"
    rho: list = field(default_factory=lambda: [0.0])
    min_source_power_db: float = 0.0
    min_separation: float | None = None
    methods: list = field(default_factory=lambda: ["ssr", "hybrid-ssr", "genie"])
    trials: int = 200
    seed: int = 0
    ssr_oversampling: int = SSR_OVERSAMPLING
    gls_oversampling: int = GLS_OVERSAMPLING
    mvdr_oversampling: int = SSR_OVERSAMPLING
    ssr_iterations: int = DEFAULT_ITERATIONS
    mcenet_checkpoint: str | None = None
    covnet_checkpoint: str | None = None
    output_dir: str | None = None
    tag: str = "run"
    deterministic: bool = False
    workers: int = 1

    def __post_init__(self):
        for name in ("num_snapshots", "snr_db", "rho"):
            v = getattr(self, name)
            setattr(self, name, list(v) if isinstance(v, (list, tuple)) else [v])
            if not getattr(self, name):
                raise ValueError(f"{name} sweep must not be empty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        bad = [m for m in self.methods if m not in METHODS + ORDER_METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {METHODS + ORDER_METHODS}")
        if self.correlation not in ("uncorrelated", "fixed", "uniform"):
            raise ValueError(f"unknown correlation mode {self.correlation!r}")

    @classmethod
    def from_dict(cls, data: dict):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry.uca(self.num_antennas, self.radius_over_wavelength)

    def subarray_scheme(self) -> SubarrayScheme:
        if self.scheme == "default":
            return SubarrayScheme.default()
        if self.scheme == "full":
            return SubarrayScheme.full(self.num_antennas)
        return SubarrayScheme.from_file(self.scheme, self.num_antennas)

    def sweep_points(self):
        return list(itertools.product(self.num_snapshots, self.snr_db, self.rho))

    def output_path(self) -> Path:
        return Path(self.output_dir) if self.output_dir else default_output_dir()


class _Context:
    """Per-process state shared across trials: geometry, dictionaries, networks."""

    def __init__(self, cfg: RunConfig, models=None):
        self.cfg = cfg
        self.geom = cfg.geometry()
        self.scheme = cfg.subarray_scheme()
        M = self.geom.num_antennas
        self.ssr_dict = Dictionary.build(GridSpec(cfg.ssr_oversampling, M), self.scheme, self.geom)
        self.mvdr_dict = (
            self.ssr_dict
            if cfg.mvdr_oversampling == cfg.ssr_oversampling
            else Dictionary.build(GridSpec(cfg.mvdr_oversampling, M), self.scheme, self.geom)
        )
        self.gls_grid = GridSpec(cfg.gls_oversampling, M)
        models = dict(models or {})
        for key, path in (("mcenet", cfg.mcenet_checkpoint), ("covnet", cfg.covnet_checkpoint)):
            if key not in models and path:
                models[key] = load_checkpoint(path)[0]
        self.models = models

    def model(self, key):
        if key not in self.models:
            raise ValueError(f"method needs a {key} network (set {key}_checkpoint)")
        return self.models[key]


def _scenario_for(cfg: RunConfig, trial: int, snr_db: float, rho: float, order: int):
    rng = np.random.default_rng([cfg.seed, trial])
    if cfg.snr_range is not None:
        snr_db = float(rng.uniform(*cfg.snr_range))
    ranges = ScenarioRanges.fixed_snr(snr_db, cfg.min_source_power_db)
    return draw_scenario(order, ranges, rng, cfg.correlation, rho, cfg.min_separation)


def _data_rng(cfg: RunConfig, trial: int, point: int):
    return np.random.default_rng([cfg.seed, trial, point, 1])


def _estimate(name, covs, scenario, ctx: _Context, cache: dict):
    """Run one method; hybrids read their initializer from ``cache``."""
    L = scenario.num_sources
    cfg = ctx.cfg
    if name.startswith("hybrid-"):
        init, _ = cache[name[len("hybrid-") :]]
        if isinstance(init, Exception):
            raise init
        return hybrid_estimate(init, covs, ctx.scheme, ctx.geom)
    if name == "ssr":
        res = ssr_alternating(covs, ctx.ssr_dict, cfg.ssr_iterations)
        return ssr_estimate(covs, L, ctx.ssr_dict, result=res)
    if name == "gls":
        return gls_grid_search(covs, L, ctx.gls_grid, ctx.scheme, ctx.geom)
    if name == "mvdr":
        return mvdr_estimate(covs, ctx.mvdr_dict, L)
    if name == "mcenet":
        model = ctx.model("mcenet")
        if model.output_dim != L:
            raise ValueError(f"DoA network outputs {model.output_dim} angles, scenario has {L}")
        return Estimate(mcenet_predict(model, covs))
    if name == "genie":
        return genie_ml(scenario, covs, ctx.scheme, ctx.geom)
    raise ValueError(f"unknown method {name!r}")


def _timed(fn):
    t0 = time.perf_counter()
    try:
        out = fn()
    except Exception as exc:  # recorded per trial, the sweep goes on
        out = exc
    return out, 1e3 * (time.perf_counter() - t0)


TRIAL_FIELDS = [
    "point",
    "trial",
    "num_snapshots",
    "snr_db",
    "rho",
    "method",
    "true_doas",
    "est_doas",
    "noise_var_est",
    "objective",
    "rmspe",
    "runtime_ms",
    "error",
]


def _fmt(x):
    return format(float(x), ".17g")


def _fmt_angles(a):
    return " ".join(_fmt(v) for v in np.atleast_1d(a))


def _run_trial(ctx: _Context, point: int, trial: int, N: int, snr: float, rho: float):
    cfg = ctx.cfg
    scenario = _scenario_for(cfg, trial, snr, rho, cfg.num_sources)
    rng = _data_rng(cfg, trial, point)
    covs = sample_covariances(synthesize_snapshots(scenario, ctx.scheme, ctx.geom, N, rng))
    cache = {}
    rows = []
    for name in cfg.methods:
        base = name[len("hybrid-") :] if name.startswith("hybrid-") else None
        if base is not None and base not in cache:
            cache[base] = _timed(lambda: _estimate(base, covs, scenario, ctx, cache))
        est, ms = _timed(lambda: _estimate(name, covs, scenario, ctx, cache))
        if base is None:
            cache[name] = (est, ms)
        else:
            ms += cache[base][1]  # hybrid timings include their initializer
        row = {
            "point": point,
            "trial": trial,
            "num_snapshots": N,
            "snr_db": _fmt(scenario.snr_db),
            "rho": _fmt(rho),
            "method": name,
            "true_doas": _fmt_angles(scenario.doas),
            "runtime_ms": "" if cfg.deterministic else f"{ms:.3f}",
        }
        if isinstance(est, Exception):
            row.update(est_doas="", noise_var_est="", objective="", rmspe="", error=f"{type(est).__name__}: {est}")
        else:
            err = periodic_error(scenario.doas, est.doas)
            row.update(
                est_doas=_fmt_angles(est.doas),
                noise_var_est="" if est.noise_var is None else _fmt(est.noise_var),
                objective=_fmt(est.objective),
                rmspe=_fmt(err.rmspe),
                error="",
            )
        rows.append(row)
    return rows


_WORKER_CTX = None


def _init_worker(cfg, models):
    global _WORKER_CTX
    _WORKER_CTX = _Context(cfg, models)


def _worker(args):
    return _run_trial(_WORKER_CTX, *args)


def _header(kind, cfg):
    return f"# subarray-doa {kind} schema={CSV_SCHEMA} version={__version__} tag={cfg.tag}\n"


def aggregate_rows(rows):
    """Aggregate per-trial rows into one row per sweep point and method.

    Only rows tagged with a sweep point contribute to it.
    """
    groups = {}
    for r in rows:
        groups.setdefault((int(r["point"]), r["method"]), []).append(r)
    out = []
    for (point, method), rs in sorted(groups.items(), key=lambda kv: kv[0][0]):
        ok = [float(r["rmspe"]) for r in rs if r["rmspe"] != ""]
        agg = {
            "point": point,
            "num_snapshots": rs[0]["num_snapshots"],
            "snr_db": rs[0]["snr_db"] if len({r["snr_db"] for r in rs}) == 1 else "mixed",
            "rho": rs[0]["rho"],
            "method": method,
            "trials": len(rs),
            "failures": len(rs) - len(ok),
        }
        if ok:
            agg.update(
                rmspe=_fmt(pooled_rmspe(ok)),
                top90_rmspe=_fmt(top_quantile_rmspe(ok, 0.9)),
                median_rmspe=_fmt(np.median(ok)),
            )
        else:
            agg.update(rmspe="", top90_rmspe="", median_rmspe="")
        out.append(agg)
    return out


def _method_order(cfg):
    return {m: i for i, m in enumerate(cfg.methods)}


def _write_csv(path, header, fieldnames, rows):
    buf = io.StringIO()
    buf.write(header)
    w = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


def read_trials_csv(path):
    """Rows of a per-trial CSV, skipping the schema comment line."""
    with open(path) as fh:
        lines = [l for l in fh if not l.startswith("#")]
    return list(csv.DictReader(lines))


@dataclass
class ExperimentResult:
    trials: list
    aggregates: list
    paths: dict

    def rmspe(self, method, point=0):
        return np.array([float(r["rmspe"]) for r in self.trials if r["method"] == method and int(r["point"]) == point and r["rmspe"] != ""])

    def runtimes(self, method, point=0):
        return np.array([float(r["runtime_ms"]) for r in self.trials if r["method"] == method and int(r["point"]) == point])


def run_experiment(cfg: RunConfig, models=None, write: bool = True) -> ExperimentResult:
    """Run every method on every trial of every sweep point.

    Args:
        cfg: Experiment configuration.
        models: Optional ``{"mcenet": MlpModel, ...}`` overriding checkpoints.
        write: Write ``<tag>_trials.csv``, ``<tag>_aggregate.csv`` and
            ``<tag>_ecdf.csv`` into the output directory.
    """
    doa_methods = [m for m in cfg.methods if m in METHODS]
    if len(doa_methods) != len(cfg.methods):
        raise ValueError("order-selection methods belong to run_order_experiment")
    jobs = [
        (p, t, N, snr, rho)
        for p, (N, snr, rho) in enumerate(cfg.sweep_points())
        for t in range(cfg.trials)
    ]
    workers = 1 if cfg.deterministic else max(1, int(cfg.workers))
    if workers == 1:
        ctx = _Context(cfg, models)
        chunks = [_run_trial(ctx, *j) for j in jobs]
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(cfg, models)) as pool:
            chunks = list(pool.map(_worker, jobs, chunksize=4))
    rows = [r for chunk in chunks for r in chunk]
    aggregates = aggregate_rows(rows)
    order = _method_order(cfg)
    aggregates.sort(key=lambda a: (a["point"], order[a["method"]]))
    ecdf_rows = []
    for a in aggregates:
        vals = [float(r["rmspe"]) for r in rows if int(r["point"]) == a["point"] and r["method"] == a["method"] and r["rmspe"] != ""]
        if vals:
            xs, fs = empirical_cdf(vals)
            ecdf_rows += [{"point": a["point"], "method": a["method"], "rmspe": _fmt(x), "fraction": _fmt(f)} for x, f in zip(xs, fs)]
    paths = {}
    if write:
        out = cfg.output_path()
        out.mkdir(parents=True, exist_ok=True)
        paths = {k: out / f"{cfg.tag}_{k}.csv" for k in ("trials", "aggregate", "ecdf")}
        _write_csv(paths["trials"], _header("trials", cfg), TRIAL_FIELDS, rows)
        _write_csv(paths["aggregate"], _header("aggregate", cfg), list(aggregates[0]), aggregates)
        _write_csv(paths["ecdf"], _header("ecdf", cfg), ["point", "method", "rmspe", "fraction"], ecdf_rows)
    return ExperimentResult(rows, aggregates, paths)


ORDER_FIELDS = ["point", "trial", "num_snapshots", "snr_db", "method", "true_order", "est_order", "scores", "runtime_ms", "error"]


def _run_order_trial(ctx: _Context, point, trial, N, snr, rho):
    cfg = ctx.cfg
    true_order = trial % (cfg.max_order + 1)  # stratified
    scenario = _scenario_for(cfg, trial, snr, rho, true_order)
    covs = sample_covariances(
        synthesize_snapshots(scenario, ctx.scheme, ctx.geom, N, _data_rng(cfg, trial, point))
    )
    rows = []
    for name in cfg.methods:
        def run():
            if name == "mdl":
                return mdl_select(
                    covs, cfg.max_order, ctx.scheme, ctx.geom,
                    ssr_oversampling=cfg.ssr_oversampling, ssr_iterations=cfg.ssr_iterations,
                )
            return covnet_select(ctx.model("covnet"), covs, cfg.max_order)

        res, ms = _timed(run)
        row = {
            "point": point,
            "trial": trial,
            "num_snapshots": N,
            "snr_db": _fmt(scenario.snr_db),
            "method": name,
            "true_order": true_order,
            "runtime_ms": "" if cfg.deterministic else f"{ms:.3f}",
        }
        if isinstance(res, Exception):
            row.update(est_order="", scores="", error=f"{type(res).__name__}: {res}")
        else:
            row.update(est_order=res.order, scores=" ".join(_fmt(s) for s in res.scores), error="")
        rows.append(row)
    return rows


def run_order_experiment(cfg: RunConfig, models=None, write: bool = True) -> ExperimentResult:
    """Model-order selection trials with true orders cycling through ``0..max_order``."""
    if any(m not in ORDER_METHODS for m in cfg.methods):
        raise ValueError(f"order experiments support {ORDER_METHODS}")
    ctx = _Context(cfg, models)
    rows = []
    for p, (N, snr, rho) in enumerate(cfg.sweep_points()):
        for t in range(cfg.trials):
            rows += _run_order_trial(ctx, p, t, N, snr, rho)
    aggregates = []
    for p, _ in enumerate(cfg.sweep_points()):
        for m in cfg.methods:
            rs = [r for r in rows if r["point"] == p and r["method"] == m]
            ok = [r for r in rs if r["est_order"] != ""]
            aggregates.append({
                "point": p,
                "num_snapshots": rs[0]["num_snapshots"],
                "method": m,
                "trials": len(rs),
                "failures": len(rs) - len(ok),
                "accuracy": _fmt(accuracy([r["true_order"] for r in ok], [r["est_order"] for r in ok])) if ok else "",
            })
    paths = {}
    if write:
        out = cfg.output_path()
        out.mkdir(parents=True, exist_ok=True)
        paths = {k: out / f"{cfg.tag}_order_{k}.csv" for k in ("trials", "aggregate")}
        _write_csv(paths["trials"], _header("order-trials", cfg), ORDER_FIELDS, rows)
        _write_csv(paths["aggregate"], _header("order-aggregate", cfg), list(aggregates[0]), aggregates)
    return ExperimentResult(rows, aggregates, paths)


BENCH_METHODS = ("mcenet", "ssr", "gls", "mvdr")


def benchmark(cfg: RunConfig, models=None, methods=BENCH_METHODS):
    """Mean and median inference time (ms) of the non-hybrid estimators.

    Times only the estimator call itself, on shared sample covariances of
    the first sweep point. One untimed call per method precedes the timing.
    """
    ctx = _Context(cfg, models)
    N, snr, rho = cfg.sweep_points()[0]
    times = {m: [] for m in methods}
    for t in range(cfg.trials):
        scenario = _scenario_for(cfg, t, snr, rho, cfg.num_sources)
        covs = sample_covariances(
            synthesize_snapshots(scenario, ctx.scheme, ctx.geom, N, _data_rng(cfg, t, 0))
        )
        for m in methods:
            fn = {
                "mcenet": lambda: mcenet_predict(ctx.model("mcenet"), covs),
                "ssr": lambda: ssr_alternating(covs, ctx.ssr_dict, cfg.ssr_iterations),
                "gls": lambda: gls_grid_search(covs, cfg.num_sources, ctx.gls_grid, ctx.scheme, ctx.geom),
                "mvdr": lambda: mvdr_estimate(covs, ctx.mvdr_dict, cfg.num_sources),
            }[m]
            if t == 0:
                fn()  # warm-up: JIT compilation and caches
            t0 = time.perf_counter()
            fn()
            times[m].append(1e3 * (time.perf_counter() - t0))
    return {m: {"mean_ms": float(np.mean(v)), "median_ms": float(np.median(v))} for m, v in times.items()}
