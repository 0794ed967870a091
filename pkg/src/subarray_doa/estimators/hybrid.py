from __future__ import annotations

import numpy as np

from ..geometry import ArrayGeometry, SubarrayScheme
from ..results import Estimate
from ..simulation import SampleCovSet
from ..sml import NOISE_FLOOR, ParamVector, block_coordinate_ascent
from .gls import gls_inner_fit


NUISANCE_MODES = ("gls", "initializer")


def initial_params(
    init,
    covs: SampleCovSet,
    scheme: SubarrayScheme,
    geom: ArrayGeometry,
    nuisance: str = "gls",
) -> ParamVector:
    """Starting point of the likelihood ascent.

    With ``nuisance="gls"`` the source powers and noise power always come
    from the constrained GLS fit at the initial angles. With
    ``"initializer"`` the initializer's own nuisance estimates are kept when
    it has them; angle-only initializers still use the GLS fit. Grid
    estimators such as SSR tend to drive the noise power to zero, which
    stalls the ascent, hence the GLS default.
    """
    if nuisance not in NUISANCE_MODES:
        raise ValueError(f"nuisance must be one of {NUISANCE_MODES}")
    if not isinstance(init, Estimate):
        init = Estimate(np.atleast_1d(np.asarray(init, dtype=float)))
    if nuisance == "gls" or init.source_cov is None or init.noise_var is None:
        fit = gls_inner_fit(init.doas, covs, scheme, geom)
        R_s = np.diag(fit.powers).astype(complex)
        noise = fit.noise_var
    else:
        R_s, noise = init.source_cov, init.noise_var
    return ParamVector(init.doas, R_s, max(float(noise), NOISE_FLOOR))


def hybrid_estimate(
    init,
    covs: SampleCovSet,
    scheme: SubarrayScheme,
    geom: ArrayGeometry,
    nuisance: str = "gls",
    **ascent_kwargs,
) -> Estimate:
    """Refine an initial estimate by block-coordinate ascent on the likelihood.

    Args:
        init: :class:`Estimate` from SSR, GLS, MVDR or MCENet, or a plain
            array of DoAs.
        covs: Sample covariances.
        scheme: Switching scheme.
        geom: Array geometry.
        nuisance: Source of the initial nuisance parameters, see
            :func:`initial_params`.
        **ascent_kwargs: Forwarded to :func:`block_coordinate_ascent`.
    """
    c0 = initial_params(init, covs, scheme, geom, nuisance)
    res = block_coordinate_ascent(c0, covs, scheme, geom, **ascent_kwargs)
    p = res.params
    return Estimate(
        p.theta,
        p.source_cov,
        p.noise_var,
        objective=res.log_likelihood,
        diagnostics={
            "iterations": res.iterations,
            "converged": res.converged,
            "initial_log_likelihood": float(res.trace[0]),
        },
    )
