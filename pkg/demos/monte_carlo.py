"""A small snapshot sweep with the experiment driver.

The same pipeline powers the `subarray-doa estimate` command: scenarios are
drawn per trial, shared across sweep points, and every method's error is
written to per-trial, aggregate and ECDF CSV files.

Run: python3 demos/monte_carlo.py [output_dir]
"""

import sys

from subarray_doa.experiment import RunConfig, run_experiment


def main(out="demo_results"):
    cfg = RunConfig(
        num_snapshots=[10, 100, 1000],
        snr_db=[20.0],
        methods=["mvdr", "ssr", "hybrid-ssr", "genie"],
        trials=30,
        ssr_oversampling=16,
        output_dir=out,
        tag="snapshots",
    )
    res = run_experiment(cfg)
    print(f"{'N':>5} {'method':<11} {'RMSPE':>9} {'top-90%':>9} {'median':>9}")
    for a in res.aggregates:
        print(f"{a['num_snapshots']:>5} {a['method']:<11} {float(a['rmspe']):9.4f} "
              f"{float(a['top90_rmspe']):9.4f} {float(a['median_rmspe']):9.4f}")
    print("\nfiles:", *map(str, res.paths.values()))
    print("A few SSR trials that merge two close sources dominate the pooled RMSPE;"
          " the top-90% column shows the typical behaviour.")


if __name__ == "__main__":
    main(*sys.argv[1:2])
