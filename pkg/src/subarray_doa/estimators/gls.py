"""General least squares covariance fitting with non-negativity constraints.

For fixed DoAs the whitened Frobenius residual

    sum_k || T_k (Rhat_k - sum_l p_l G_k a_l a_l^H G_k^T - sigma^2 I) T_k^H ||_F^2

is a non-negative least squares problem in ``(p, sigma^2)``, with
``T_k = Rhat_k^{-1/2}``. The DoAs themselves are found by exhaustive search
over combinations of grid angles.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from ..geometry import ArrayGeometry, SubarrayScheme, subarray_steering
from ..results import Estimate
from ..simulation import SampleCovSet
from .grid import Dictionary, GridSpec

MAX_COMBINATIONS = 10**6
_CHUNK = 20000


@dataclass
class GLSFit:
    powers: np.ndarray
    noise_var: float
    residual: float


def whitening_filters(covs: SampleCovSet, floor: float = 1e-10) -> np.ndarray:
    """``Rhat_k^{-1/2}`` with eigenvalues floored at ``floor * max``."""
    R = covs.matrices
    w, V = np.linalg.eigh(0.5 * (R + np.conj(np.swapaxes(R, -1, -2))))
    wmax = w[..., -1:]
    w = np.maximum(w, floor * np.maximum(wmax, np.finfo(float).tiny))
    if np.any(w <= 0):
        raise np.linalg.LinAlgError("sample covariance is zero")
    return (V * (1.0 / np.sqrt(w))[..., None, :]) @ np.conj(np.swapaxes(V, -1, -2))


def _realify(Z):
    """Stack real and imaginary parts along the last axis."""
    return np.concatenate([Z.real, Z.imag], axis=-1)


def _whitened_problem(T, covs):
    """Real targets and noise basis of the whitened fit."""
    K, W, _ = T.shape
    Th = np.conj(np.swapaxes(T, -1, -2))
    target = _realify((T @ covs.matrices @ Th).reshape(-1))
    noise = _realify((T @ Th).reshape(-1))
    return target, noise


def _source_basis(T, B):
    """Real-vectorised ``T_k b b^H T_k^H`` for each column of ``B`` ``(K, W, n)``.

    Returns an ``(n, 2*K*W**2)`` array.
    """
    tb = T @ B  # (K, W, n)
    outer = tb[:, :, None, :] * np.conj(tb)[:, None, :, :]  # (K, W, W, n)
    n = B.shape[-1]
    flat = np.moveaxis(outer, -1, 0).reshape(n, -1)
    return _realify(flat)


def gls_inner_fit(
    theta,
    covs: SampleCovSet,
    scheme: SubarrayScheme,
    geom: ArrayGeometry,
    whitening: np.ndarray | None = None,
) -> GLSFit:
    """Non-negative powers and noise variance minimising the whitened residual.

    Args:
        theta: ``L`` fixed DoAs (``L`` may be 0).
        covs: Sample covariances.
        scheme: Switching scheme.
        geom: Array geometry.
        whitening: Optional precomputed ``(K, W, W)`` whitening filters.

    Raises:
        ValueError: If every basis column vanishes.
    """
    T = whitening_filters(covs) if whitening is None else whitening
    target, noise = _whitened_problem(T, covs)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if len(theta):
        src = _source_basis(T, subarray_steering(scheme, geom, theta))
        A = np.column_stack([src.T, noise])
    else:
        A = noise[:, None]
    if not np.any(A):
        raise ValueError("degenerate GLS basis: all columns are zero")
    x, rnorm = nnls(A, target)
    residual = float(np.sum((target - A @ x) ** 2))
    return GLSFit(x[:-1].copy(), float(x[-1]), residual)


def _nnls_small(H, f):
    """Exact NNLS for a batch of tiny problems by enumerating supports.

    Minimises ``x^T H x - 2 f^T x`` over ``x >= 0``; the optimum is the
    unconstrained minimiser on the support that gives the lowest value among
    all supports with a non-negative solution.

    Args:
        H: ``(n, p, p)`` Gram matrices.
        f: ``(n, p)`` linear terms.

    Returns:
        ``(x, value)`` with shapes ``(n, p)`` and ``(n,)``.
    """
    n, p = f.shape
    best = np.zeros(n)  # x = 0 gives value 0
    best_x = np.zeros((n, p))
    for size in range(1, p + 1):
        for support in itertools.combinations(range(p), size):
            s = list(support)
            Hs = H[:, s][:, :, s]
            fs = f[:, s]
            try:
                xs = np.linalg.solve(Hs, fs[..., None])[..., 0]
            except np.linalg.LinAlgError:
                xs = (np.linalg.pinv(Hs) @ fs[..., None])[..., 0]
            value = -np.sum(fs * xs, axis=1)
            ok = np.all(xs >= 0.0, axis=1) & (value < best)
            if np.any(ok):
                best[ok] = value[ok]
                best_x[ok] = 0.0
                best_x[np.ix_(ok, s)] = xs[ok]
    return best_x, best


def gls_grid_search(
    covs: SampleCovSet,
    num_sources: int,
    grid: GridSpec,
    scheme: SubarrayScheme,
    geom: ArrayGeometry,
    max_combinations: int = MAX_COMBINATIONS,
) -> Estimate:
    """Best combination of ``L`` grid angles under the GLS criterion.

    Every ``L``-subset of grid angles is scored by its constrained inner fit;
    ties go to the lexicographically smallest index tuple. The winner is
    refitted with :func:`gls_inner_fit` to report its residual.

    Raises:
        ValueError: If ``L < 1`` or the number of combinations exceeds
            ``max_combinations``.
    """
    L = int(num_sources)
    if L < 1:
        raise ValueError("gls_grid_search needs at least one source")
    Q = grid.size
    n_comb = math.comb(Q, L)
    if n_comb > max_combinations:
        raise ValueError(
            f"{n_comb} angle combinations exceed the budget of {max_combinations}; "
            "use a coarser grid"
        )
    dictionary = Dictionary.build(grid, scheme, geom)
    T = whitening_filters(covs)
    target, noise = _whitened_problem(T, covs)
    src = _source_basis(T, dictionary.steering)  # (Q, D)
    U = np.vstack([src, noise])
    gram = U @ U.T
    lin = U @ target

    best_value = np.inf
    best_combo = None
    combos_iter = itertools.combinations(range(Q), L)
    while True:
        chunk = np.fromiter(
            itertools.chain.from_iterable(itertools.islice(combos_iter, _CHUNK)),
            dtype=np.int64,
        ).reshape(-1, L)
        if chunk.size == 0:
            break
        cols = np.hstack([chunk, np.full((len(chunk), 1), Q)])
        H = gram[cols[:, :, None], cols[:, None, :]]
        f = lin[cols]
        _, value = _nnls_small(H, f)
        i = int(np.argmin(value))
        if value[i] < best_value:
            best_value = value[i]
            best_combo = chunk[i]

    theta = dictionary.angles[best_combo]
    fit = gls_inner_fit(theta, covs, scheme, geom, whitening=T)
    return Estimate(
        theta,
        np.diag(fit.powers).astype(complex),
        fit.noise_var,
        objective=fit.residual,
        diagnostics={"grid_indices": tuple(int(g) for g in best_combo), "combinations": n_comb},
    )
