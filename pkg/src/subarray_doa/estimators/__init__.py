"""Grid-based model-driven DoA estimators and the hybrid refinement."""

from .grid import Dictionary, GridSpec, peak_indices, peak_pick
from .gls import GLSFit, gls_grid_search, gls_inner_fit, whitening_filters
from .hybrid import hybrid_estimate, initial_params
from .mvdr import mvdr_estimate, mvdr_spectrum
from .ssr import SSRResult, ssr_alternating, ssr_estimate, ssr_weights

# Oversampling factors of the grids used for each estimator family.
SSR_OVERSAMPLING = 32
GLS_OVERSAMPLING = 8

__all__ = [
    "Dictionary",
    "GLSFit",
    "GridSpec",
    "SSRResult",
    "GLS_OVERSAMPLING",
    "SSR_OVERSAMPLING",
    "gls_grid_search",
    "gls_inner_fit",
    "hybrid_estimate",
    "initial_params",
    "mvdr_estimate",
    "mvdr_spectrum",
    "peak_indices",
    "peak_pick",
    "ssr_alternating",
    "ssr_estimate",
    "ssr_weights",
    "whitening_filters",
]
