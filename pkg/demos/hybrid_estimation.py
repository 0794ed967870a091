"""One scenario, four estimators.

Three sources impinge on a 9-antenna circular array that is sampled by only
three RF chains, switched through four subarrays. We estimate the angles
with the sparse (SSR) grid method, refine it by likelihood ascent (the
hybrid estimator), and compare with the genie bound that starts the ascent
at the truth.

Run: python3 demos/hybrid_estimation.py
"""

import numpy as np

from subarray_doa import ArrayGeometry, SubarrayScheme
from subarray_doa.estimators import Dictionary, GridSpec, hybrid_estimate, mvdr_estimate, ssr_estimate
from subarray_doa.metrics import periodic_error
from subarray_doa.simulation import ScenarioRanges, draw_scenario, sample_covariances, synthesize_snapshots
from subarray_doa.sml import genie_ml


def show(name, est, truth):
    err = periodic_error(truth, est.doas)
    print(f"  {name:<11} {np.round(est.doas, 4)}  RMSPE {err.rmspe:.2e}")


def main():
    geom, scheme = ArrayGeometry.uca(), SubarrayScheme.default()
    rng = np.random.default_rng(2024)
    sc = draw_scenario(3, ScenarioRanges.fixed_snr(20.0, 0.0), rng)
    print("true DoAs  ", np.round(sc.doas, 4), "(rad), SNR 20 dB")

    d = Dictionary.build(GridSpec(16, geom.num_antennas), scheme, geom)
    for N in (10, 1000):
        covs = sample_covariances(synthesize_snapshots(sc, scheme, geom, N, rng))
        print(f"\nN = {N} snapshots per subarray")
        show("MVDR", mvdr_estimate(covs, d, 3), sc.doas)
        ssr = ssr_estimate(covs, 3, d)
        show("SSR", ssr, sc.doas)
        show("hybrid-SSR", hybrid_estimate(ssr, covs, scheme, geom), sc.doas)
        show("genie", genie_ml(sc, covs, scheme, geom), sc.doas)
    print(f"\nThe grid methods cannot beat the grid spacing ({d.angles[1]:.3f} rad). The ascent"
          " removes that bias and lands on the genie solution; with 10 snapshots that"
          " likelihood maximum is itself noisy and can sit farther out than a grid point.")


if __name__ == "__main__":
    main()
