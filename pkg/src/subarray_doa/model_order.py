"""Model-order selection by the MDL criterion with plug-in estimates, or by CovNet."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimators import GLS_OVERSAMPLING, SSR_OVERSAMPLING
from .estimators.gls import gls_grid_search
from .estimators.grid import Dictionary, GridSpec
from .estimators.hybrid import hybrid_estimate
from .estimators.ssr import DEFAULT_ITERATIONS, ssr_alternating, ssr_estimate
from .geometry import ArrayGeometry, SubarrayScheme
from .neural.mlp import MlpModel
from .neural.training import covnet_predict
from .simulation import SampleCovSet
from .sml import ParamVector, log_likelihood, noise_only_log_likelihood

ESTIMATOR_KINDS = ("hybrid-ssr", "hybrid-gls", "gls")


@dataclass
class OrderSelectionResult:
    """Selected order with the per-order scores it was chosen from.

    For MDL, ``scores[l] = loglik[l] - penalty[l]``; for CovNet the scores
    are the posterior probabilities.
    """

    order: int
    scores: np.ndarray
    log_likelihoods: np.ndarray | None = None
    penalties: np.ndarray | None = None
    estimates: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


def mdl_penalty(order: int, num_subarrays: int, num_snapshots: int) -> float:
    """``(2 l + 1) / 2 * ln(K N)`` for uncorrelated sources."""
    return 0.5 * (2 * order + 1) * math.log(num_subarrays * num_snapshots)


def select_from_scores(scores) -> int:
    """Index of the largest score; ties go to the smaller order."""
    s = np.asarray(scores, dtype=float)
    if s.size == 0:
        raise ValueError("no scores to select from")
    if np.all(s == -np.inf):
        return 0
    return int(np.argmax(s))


def _plugin_estimate(kind, covs, order, scheme, geom, ssr_dict, ssr_result, gls_grid):
    if kind == "gls":
        est = gls_grid_search(covs, order, gls_grid, scheme, geom)
        c = ParamVector(est.doas, est.source_cov, est.noise_var)
        return est, log_likelihood(c, covs, scheme, geom)
    if kind == "hybrid-ssr":
        init = ssr_estimate(covs, order, ssr_dict, result=ssr_result)
    else:
        init = gls_grid_search(covs, order, gls_grid, scheme, geom)
    est = hybrid_estimate(init, covs, scheme, geom)
    return est, est.objective


def mdl_select(
    covs: SampleCovSet,
    max_order: int,
    scheme: SubarrayScheme,
    geom: ArrayGeometry,
    estimator: str = "hybrid-ssr",
    penalty_scale: float = 1.0,
    ssr_oversampling: int = SSR_OVERSAMPLING,
    gls_oversampling: int = GLS_OVERSAMPLING,
    ssr_iterations: int = DEFAULT_ITERATIONS,
) -> OrderSelectionResult:
    """MDL order estimate ``argmax_l [loglik(l) - c(l)]``.

    Order 0 uses the closed-form noise-only fit. Higher orders plug in the
    chosen estimator and evaluate the snapshot-scaled log-likelihood at its
    estimate; all SSR-based orders share one SSR spectrum. An estimator
    failure at some order scores that order ``-inf`` and is recorded in
    ``diagnostics["failures"]``.

    Args:
        covs: Sample covariances.
        max_order: Largest candidate order ``L_max``.
        scheme: Switching scheme.
        geom: Array geometry.
        estimator: ``"hybrid-ssr"``, ``"hybrid-gls"`` or ``"gls"``.
        penalty_scale: Multiplier of the penalty (0 selects the likelihood
            maximiser).
    """
    if max_order < 0:
        raise ValueError("max_order must be >= 0")
    if estimator not in ESTIMATOR_KINDS:
        raise ValueError(f"estimator must be one of {ESTIMATOR_KINDS}")
    K, N = covs.num_subarrays, covs.num_snapshots
    loglik = np.full(max_order + 1, -np.inf)
    penalties = np.array([penalty_scale * mdl_penalty(l, K, N) for l in range(max_order + 1)])
    estimates = [None] * (max_order + 1)
    failures = {}

    loglik[0], s2 = noise_only_log_likelihood(covs)
    diag = {"noise_only_variance": s2}

    ssr_dict = ssr_result = None
    gls_grid = GridSpec(gls_oversampling, geom.num_antennas)
    if estimator == "hybrid-ssr" and max_order >= 1:
        ssr_dict = Dictionary.build(GridSpec(ssr_oversampling, geom.num_antennas), scheme, geom)
        ssr_result = ssr_alternating(covs, ssr_dict, ssr_iterations)
    for order in range(1, max_order + 1):
        try:
            est, value = _plugin_estimate(estimator, covs, order, scheme, geom, ssr_dict, ssr_result, gls_grid)
        except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
            failures[order] = f"{type(exc).__name__}: {exc}"
            continue
        if not np.isfinite(value):
            failures[order] = "non-finite log-likelihood"
            continue
        estimates[order] = est
        loglik[order] = value

    scores = loglik - penalties
    diag["failures"] = failures
    return OrderSelectionResult(select_from_scores(scores), scores, loglik, penalties, estimates, diag)


def covnet_select(model: MlpModel, covs, max_order: int | None = None) -> OrderSelectionResult:
    """Order with the largest CovNet posterior.

    Raises:
        ValueError: If the network's class count does not match
            ``max_order + 1`` or the input size does not match.
    """
    if max_order is not None and model.output_dim != max_order + 1:
        raise ValueError(f"network has {model.output_dim} classes, expected {max_order + 1}")
    order, probs = covnet_predict(model, covs)
    return OrderSelectionResult(int(order), probs)
