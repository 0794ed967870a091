"""How many sources are there?

MDL scores every candidate order by its maximised likelihood minus a
complexity penalty. A small CovNet learns the same decision from data. The
network here trains for about a minute, far below a full-scale budget,
so expect it to be rough at low SNR.

Run: python3 demos/model_order.py
"""

import numpy as np

from subarray_doa import ArrayGeometry, SubarrayScheme
from subarray_doa.model_order import covnet_select, mdl_select
from subarray_doa.neural import TrainConfig, train_covnet
from subarray_doa.simulation import ScenarioRanges, draw_scenario, sample_covariances, synthesize_snapshots


def main():
    geom, scheme = ArrayGeometry.uca(), SubarrayScheme.default()
    rng = np.random.default_rng(7)

    print("training a desk-scale CovNet (128 units, 3000 batches of 64) ...")
    cfg = TrainConfig(hidden_units=128, batch_size=64, learning_rate=1e-2, total_samples=64 * 3000, loss="cross_entropy")
    covnet = train_covnet(cfg, scheme, geom).model

    for true_order in range(4):
        sc = draw_scenario(true_order, ScenarioRanges.fixed_snr(20.0), rng)
        covs = sample_covariances(synthesize_snapshots(sc, scheme, geom, 10, rng))
        mdl = mdl_select(covs, 3, scheme, geom, ssr_oversampling=16)
        net = covnet_select(covnet, covs, 3)
        print(f"\ntrue order {true_order}: MDL picks {mdl.order}, CovNet picks {net.order}")
        print("  MDL  loglik - penalty:", np.round(mdl.scores, 1))
        print("  CovNet posteriors:    ", np.round(net.scores, 3))


if __name__ == "__main__":
    main()
