from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Estimate:
    """Output of a DoA estimator.

    ``source_cov`` and ``noise_var`` are ``None`` for estimators that only
    produce angles (MVDR, MCENet).
    """

    doas: np.ndarray
    source_cov: np.ndarray | None = None
    noise_var: float | None = None
    objective: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        order = np.argsort(np.asarray(self.doas, dtype=float), kind="stable")
        self.doas = np.asarray(self.doas, dtype=float)[order]
        if self.source_cov is not None:
            self.source_cov = np.asarray(self.source_cov)[np.ix_(order, order)]

    @property
    def num_sources(self) -> int:
        return len(self.doas)
