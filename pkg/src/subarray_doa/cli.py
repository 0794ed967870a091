"""Command-line harness.

Experiment settings come from a JSON file (``--config``) with individual
flags taking precedence. Outputs go to ``--output-dir``, else to the
directory named by ``SUBARRAY_DOA_OUTPUT``, else ``./results``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .estimators import Dictionary, GridSpec, gls_grid_search, hybrid_estimate, mvdr_estimate, ssr_estimate
from .experiment import (
    BENCH_METHODS,
    METHODS,
    ORDER_METHODS,
    RunConfig,
    benchmark,
    default_output_dir,
    run_experiment,
    run_order_experiment,
)
from .neural.checkpoint import load_checkpoint, save_checkpoint
from .neural.training import TrainConfig, mcenet_predict, train_covnet, train_mcenet
from .results import Estimate
from .search import SearchSpace, random_search
from .simulation import ScenarioRanges, draw_scenario, load_snapshots, sample_covariances, save_snapshots, synthesize_snapshots

log = logging.getLogger("subarray_doa")

# flag dest -> RunConfig field
_RUN_FLAGS = {
    "trials": "trials",
    "seed": "seed",
    "tag": "tag",
    "num_sources": "num_sources",
    "max_order": "max_order",
    "num_snapshots": "num_snapshots",
    "snr_db": "snr_db",
    "snr_range": "snr_range",
    "rho": "rho",
    "correlation": "correlation",
    "min_source_power_db": "min_source_power_db",
    "methods": "methods",
    "scheme": "scheme",
    "ssr_oversampling": "ssr_oversampling",
    "gls_oversampling": "gls_oversampling",
    "ssr_iterations": "ssr_iterations",
    "mcenet_checkpoint": "mcenet_checkpoint",
    "covnet_checkpoint": "covnet_checkpoint",
    "workers": "workers",
    "output_dir": "output_dir",
}


def _parse_set(items):
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise SystemExit(f"--set expects KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def _load_json(path):
    if not path:
        return {}
    with open(path) as fh:
        return json.load(fh)


def build_run_config(args, **forced) -> RunConfig:
    """Config file, then ``--set`` pairs, then dedicated flags, then ``forced``."""
    data = _load_json(args.config)
    data.update(_parse_set(args.set))
    for dest, key in _RUN_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            data[key] = value
    if getattr(args, "deterministic", False):
        data["deterministic"] = True
    data.update(forced)
    return RunConfig.from_dict(data)


def _add_common(p):
    p.add_argument("--config", help="JSON file with configuration keys")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key (JSON value)")
    p.add_argument("--output-dir", dest="output_dir", help="output directory")
    p.add_argument("--tag", help="file name prefix of the outputs")
    p.add_argument("--seed", type=int)


def _add_scenario(p):
    p.add_argument("--num-sources", dest="num_sources", type=int)
    p.add_argument("--num-snapshots", dest="num_snapshots", type=int, nargs="+")
    p.add_argument("--snr-db", dest="snr_db", type=float, nargs="+")
    p.add_argument("--snr-range", dest="snr_range", type=float, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--rho", type=float, nargs="+")
    p.add_argument("--correlation", choices=["uncorrelated", "fixed", "uniform"])
    p.add_argument("--min-source-power-db", dest="min_source_power_db", type=float)
    p.add_argument("--scheme", help="'default', 'full' or a scheme file (one line of 1-based indices per subarray)")


def _add_run(p):
    p.add_argument("--trials", type=int)
    p.add_argument("--ssr-oversampling", dest="ssr_oversampling", type=int)
    p.add_argument("--gls-oversampling", dest="gls_oversampling", type=int)
    p.add_argument("--ssr-iterations", dest="ssr_iterations", type=int)
    p.add_argument("--mcenet-checkpoint", dest="mcenet_checkpoint")
    p.add_argument("--covnet-checkpoint", dest="covnet_checkpoint")
    p.add_argument("--workers", type=int)
    p.add_argument("--deterministic", action="store_true", help="single process, blank timing columns")


def _add_train(p):
    p.add_argument("--network", choices=["mcenet", "covnet"], default="mcenet")
    p.add_argument("--hidden-layers", dest="num_hidden_layers", type=int)
    p.add_argument("--hidden-units", dest="hidden_units", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--total-samples", dest="total_samples", type=int)
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--loss", choices=["mce", "perm_mce", "cross_entropy"])
    p.add_argument("--max-order", dest="max_order", type=int)
    p.add_argument("--log-every", dest="log_every", type=int)
    p.add_argument("--warm-start", dest="warm_start", help="checkpoint to continue from")


_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
_COVNET_DEFAULTS = {"hidden_units": 128, "batch_size": 64, "learning_rate": 1e-2, "total_samples": 64 * 10_000, "loss": "cross_entropy"}


def build_train_config(args) -> TrainConfig:
    data = {}
    if args.network == "covnet":
        data.update(_COVNET_DEFAULTS)
    data.update(_load_json(args.config))
    data.update(_parse_set(args.set))
    for key in _TRAIN_KEYS - {"ranges"}:
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if getattr(args, "num_snapshots", None):
        data["num_snapshots"] = args.num_snapshots[0]
    ranges = dict(data.pop("ranges", {}))
    if args.snr_range is not None:
        ranges["snr_db"] = tuple(args.snr_range)
    if args.min_source_power_db is not None:
        ranges["min_source_power_db"] = args.min_source_power_db
    if ranges:
        ranges.setdefault("snr_db", ScenarioRanges().snr_db)
        data["ranges"] = ScenarioRanges(**{**ranges, "snr_db": tuple(ranges["snr_db"])})
    unknown = set(data) - _TRAIN_KEYS
    if unknown:
        raise SystemExit(f"unknown training config keys {sorted(unknown)}")
    return TrainConfig(**data)


def _out_dir(args) -> Path:
    out = Path(args.output_dir) if getattr(args, "output_dir", None) else default_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args):
    cfg = build_run_config(args)
    geom, scheme = cfg.geometry(), cfg.subarray_scheme()
    out = _out_dir(args)
    rng = np.random.default_rng(cfg.seed)
    ranges = ScenarioRanges.fixed_snr(cfg.snr_db[0], cfg.min_source_power_db)
    if cfg.snr_range is not None:
        ranges = ScenarioRanges(cfg.min_source_power_db, tuple(cfg.snr_range))
    lines = []
    for i in range(args.count):
        sc = draw_scenario(cfg.num_sources, ranges, rng, cfg.correlation, cfg.rho[0])
        Y = synthesize_snapshots(sc, scheme, geom, cfg.num_snapshots[0], rng)
        path = out / f"{cfg.tag}_{i:04d}.snap"
        save_snapshots(path, Y)
        lines.append(json.dumps({
            "file": path.name,
            "doas": sc.doas.tolist(),
            "source_powers": np.real(np.diag(sc.source_cov)).tolist(),
            "noise_var": sc.noise_var,
            "rho": sc.rho,
        }))
    (out / f"{cfg.tag}_scenarios.jsonl").write_text("\n".join(lines) + "\n")
    print(f"wrote {args.count} snapshot sets to {out}")


def _single_estimate(args, cfg: RunConfig):
    geom, scheme = cfg.geometry(), cfg.subarray_scheme()
    covs = sample_covariances(load_snapshots(args.snapshots))
    L = cfg.num_sources
    M = geom.num_antennas
    method = cfg.methods[0]
    base = method[len("hybrid-"):] if method.startswith("hybrid-") else method
    if base == "ssr":
        est = ssr_estimate(covs, L, Dictionary.build(GridSpec(cfg.ssr_oversampling, M), scheme, geom), cfg.ssr_iterations)
    elif base == "gls":
        est = gls_grid_search(covs, L, GridSpec(cfg.gls_oversampling, M), scheme, geom)
    elif base == "mvdr":
        est = mvdr_estimate(covs, Dictionary.build(GridSpec(cfg.mvdr_oversampling, M), scheme, geom), L)
    elif base == "mcenet":
        if not cfg.mcenet_checkpoint:
            raise SystemExit("mcenet needs --mcenet-checkpoint")
        est = Estimate(mcenet_predict(load_checkpoint(cfg.mcenet_checkpoint)[0], covs))
    else:
        raise SystemExit(f"method {method!r} cannot run on a snapshot file")
    if method.startswith("hybrid-"):
        est = hybrid_estimate(est, covs, scheme, geom)
    print(json.dumps({
        "method": method,
        "doas": est.doas.tolist(),
        "noise_var": est.noise_var,
        "objective": est.objective,
    }))


def cmd_estimate(args):
    cfg = build_run_config(args)
    if args.snapshots:
        return _single_estimate(args, cfg)
    res = run_experiment(cfg)
    _print_rows(res.aggregates)
    print(f"wrote {', '.join(str(p) for p in res.paths.values())}")


def _print_rows(rows):
    if not rows:
        return
    w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)


def cmd_train(args):
    cfg = build_train_config(args)
    warm = load_checkpoint(args.warm_start)[0] if args.warm_start else None
    trainer = train_mcenet if args.network == "mcenet" else train_covnet
    res = trainer(cfg, _scheme_from(args), _geometry_from(args), warm_start=warm)
    out = Path(args.out) if args.out else _out_dir(args) / f"{args.network}.ckpt"
    out.parent.mkdir(parents=True, exist_ok=True)
    meta = dict(res.metadata, seed=cfg.seed, loss=cfg.loss, warm_start=args.warm_start)
    save_checkpoint(out, res.model, meta)
    tail = res.losses[-100:]
    print(f"trained {args.network} on {res.samples_seen} samples; final mean loss {tail.mean() if tail.size else float('nan'):.4f}; saved {out}")


def _scheme_from(args):
    return RunConfig(scheme=args.scheme or "default").subarray_scheme()


def _geometry_from(args):
    return RunConfig().geometry()


def cmd_select_order(args):
    cfg = build_run_config(args, methods=args.method)
    res = run_order_experiment(cfg)
    _print_rows(res.aggregates)
    print(f"wrote {', '.join(str(p) for p in res.paths.values())}")


def cmd_bench(args):
    cfg = build_run_config(args, methods=["ssr"])
    methods = args.bench_methods or [m for m in BENCH_METHODS if m != "mcenet" or cfg.mcenet_checkpoint]
    result = benchmark(cfg, methods=methods)
    rows = [{"method": m, **v} for m, v in result.items()]
    out = _out_dir(args) / f"{cfg.tag}_bench.csv"
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["method", "mean_ms", "median_ms"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    _print_rows(rows)


def cmd_random_search(args):
    cfg = build_train_config(args)
    rng = np.random.default_rng(args.search_seed)
    rows = random_search(SearchSpace(), args.budget, args.validation_size, rng, cfg, _scheme_from(args), _geometry_from(args))
    out = _out_dir(args) / f"{args.tag or 'search'}_random_search.csv"
    with open(out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    _print_rows(rows)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subarray-doa", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw scenarios and write snapshot files")
    _add_common(p)
    _add_scenario(p)
    p.add_argument("--count", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="Monte Carlo DoA estimation, or one snapshot file")
    _add_common(p)
    _add_scenario(p)
    _add_run(p)
    p.add_argument("--methods", nargs="+", choices=METHODS)
    p.add_argument("--snapshots", help="estimate from this snapshot file instead of simulating")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("train", help="train MCENet or CovNet and write a checkpoint")
    _add_common(p)
    _add_scenario(p)
    _add_train(p)
    p.add_argument("--out", help="checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("select-order", help="model-order selection trials")
    _add_common(p)
    _add_scenario(p)
    _add_run(p)
    p.add_argument("--max-order", dest="max_order", type=int)
    p.add_argument("--method", nargs="+", choices=ORDER_METHODS, default=["mdl"])
    p.set_defaults(func=cmd_select_order)

    p = sub.add_parser("bench", help="inference timings of the plain estimators")
    _add_common(p)
    _add_scenario(p)
    _add_run(p)
    p.add_argument("--bench-methods", dest="bench_methods", nargs="+", choices=BENCH_METHODS)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("random-search", help="random hyper-parameter search for MCENet")
    _add_common(p)
    _add_scenario(p)
    _add_train(p)
    p.add_argument("--budget", type=int, default=4)
    p.add_argument("--validation-size", dest="validation_size", type=int, default=1000)
    p.add_argument("--search-seed", dest="search_seed", type=int, default=0)
    p.set_defaults(func=cmd_random_search)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        parser.exit(2, f"subarray-doa: error: {exc}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
