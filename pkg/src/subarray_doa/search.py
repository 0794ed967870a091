"""Small-scale random hyper-parameter search for the DoA network."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import ArrayGeometry, SubarrayScheme
from .neural.training import TrainConfig, heldout_mce, mcenet_batch, train_mcenet


@dataclass(frozen=True)
class SearchSpace:
    num_hidden_layers: tuple = (1, 2, 3, 4)
    hidden_units: tuple = (128, 256, 512, 1024, 2048)
    learning_rate: tuple = (1e-2, 1e-3, 1e-4)

    def sample(self, rng: np.random.Generator):
        return (
            int(rng.choice(self.num_hidden_layers)),
            int(rng.choice(self.hidden_units)),
            float(rng.choice(self.learning_rate)),
        )


def random_search(
    space: SearchSpace,
    budget: int,
    validation_size: int,
    rng: np.random.Generator,
    base: TrainConfig,
    scheme: SubarrayScheme,
    geom: ArrayGeometry,
):
    """Train one network per sampled tuple and rank them by validation loss.

    Every candidate trains on the same data stream (``base.seed``) and is
    scored by the mean fixed-order MCE on one shared validation set.

    Returns:
        List of ``{"num_hidden_layers", "hidden_units", "learning_rate",
        "validation_loss"}`` dicts sorted by loss (stable for ties).
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    tuples = [space.sample(rng) for _ in range(budget)]
    X_val, y_val = mcenet_batch(base, scheme, geom, rng, batch_size=validation_size)
    rows = []
    for n_h, n_u, lr in tuples:
        cfg = replace(base, num_hidden_layers=n_h, hidden_units=n_u, learning_rate=lr)
        model = train_mcenet(cfg, scheme, geom).model
        rows.append({
            "num_hidden_layers": n_h,
            "hidden_units": n_u,
            "learning_rate": lr,
            "validation_loss": heldout_mce(model, X_val, y_val),
        })
    return sorted(rows, key=lambda r: r["validation_loss"])
