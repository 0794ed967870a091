from __future__ import annotations

import numpy as np

from ..results import Estimate
from ..simulation import SampleCovSet
from .grid import Dictionary, peak_pick


def mvdr_spectrum(covs: SampleCovSet, dictionary: Dictionary, loading: float = 1e-6) -> np.ndarray:
    """``1 / sum_k a^H G_k^T Rhat_k^{-1} G_k a`` on the grid.

    Diagonal loading of ``loading * tr(Rhat)/W`` is applied when there are
    fewer snapshots than RF chains.
    """
    R = covs.matrices
    K, W, _ = R.shape
    if covs.num_snapshots < W:
        tr = np.real(np.trace(R, axis1=-2, axis2=-1))
        R = R + (loading * tr / W)[:, None, None] * np.eye(W)
    A = dictionary.steering
    X = np.linalg.solve(R, A)
    denom = np.real(np.sum(np.conj(A) * X, axis=(0, 1)))
    return 1.0 / denom


def mvdr_estimate(covs: SampleCovSet, dictionary: Dictionary, num_sources: int) -> Estimate:
    spectrum = mvdr_spectrum(covs, dictionary)
    theta = peak_pick(spectrum, dictionary.angles, num_sources)
    return Estimate(theta, diagnostics={"spectrum_max": float(spectrum.max())})
