"""Sparse signal representation estimator with SPICE-style alternating updates.

Minimises ``sum_k tr(Rcheck_k^{-1} Rhat_k)`` over grid powers ``p >= 0`` and
noise power ``sigma^2 >= 0`` subject to ``sum_g w_g p_g + wbar sigma^2 = 1``,
where ``Rcheck_k = A_k diag(p) A_k^H + sigma^2 I`` on the grid dictionary.
The multiplicative updates keep the iterate on the constraint set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..results import Estimate
from ..simulation import SampleCovSet
from .grid import Dictionary, peak_indices

DEFAULT_ITERATIONS = 10_000
# spurious low-level maxima absorb noise power; ignore those under -20 dB of the top peak
PEAK_FLOOR = 1e-2
_FLUSH = 1e-250


@njit(cache=True)
def _hpd_inverse(R, out):
    """Inverse of a small Hermitian positive definite matrix via Cholesky."""
    n = R.shape[0]
    Lc = np.zeros((n, n), dtype=np.complex128)
    for j in range(n):
        d = R[j, j].real
        for m in range(j):
            d -= (Lc[j, m] * np.conj(Lc[j, m])).real
        d = np.sqrt(d)
        Lc[j, j] = d
        for i in range(j + 1, n):
            acc = R[i, j]
            for m in range(j):
                acc -= Lc[i, m] * np.conj(Lc[j, m])
            Lc[i, j] = acc / d
    # invert the lower factor, then R^{-1} = L^{-H} L^{-1}
    Li = np.zeros((n, n), dtype=np.complex128)
    for j in range(n):
        Li[j, j] = 1.0 / Lc[j, j]
        for i in range(j + 1, n):
            acc = 0j
            for m in range(j, i):
                acc -= Lc[i, m] * Li[m, j]
            Li[i, j] = acc / Lc[i, i]
    for i in range(n):
        for j in range(i, n):
            acc = 0j
            for m in range(j, n):
                acc += np.conj(Li[m, i]) * Li[m, j]
            out[i, j] = acc
            out[j, i] = np.conj(acc)


@njit(cache=True)
def _ssr_kernel(Pd, Pr, Pi, pairs, Rh, p, s2, sw, swbar, iters, objective):
    """Alternating updates in place on ``p``; returns the final noise power.

    ``Pd[k, i, g] = |A[k, i, g]|^2`` and ``Pr + j Pi`` hold
    ``A[k, i, g] conj(A[k, j, g])`` for each strict upper pair ``(i, j)``.
    """
    K, W, Q = Pd.shape
    npair = pairs.shape[0]
    Rc = np.empty((W, W), dtype=np.complex128)
    Ri = np.empty((W, W), dtype=np.complex128)
    Mx = np.empty((W, W), dtype=np.complex128)
    S = np.empty((W, W), dtype=np.complex128)
    r2 = np.empty(Q)
    for it in range(iters + 1):
        obj = 0.0
        rs2 = 0.0
        r2[:] = 0.0
        for k in range(K):
            for i in range(W):
                acc = 0.0
                for g in range(Q):
                    acc += p[g] * Pd[k, i, g]
                Rc[i, i] = acc + s2
            for q in range(npair):
                ar = 0.0
                ai = 0.0
                for g in range(Q):
                    ar += p[g] * Pr[k, q, g]
                    ai += p[g] * Pi[k, q, g]
                i, j = pairs[q, 0], pairs[q, 1]
                Rc[i, j] = complex(ar, ai)
                Rc[j, i] = complex(ar, -ai)
            _hpd_inverse(Rc, Ri)
            for i in range(W):
                for j in range(W):
                    acc = 0j
                    for m in range(W):
                        acc += Ri[i, m] * Rh[k, m, j]
                    Mx[i, j] = acc
            for i in range(W):
                for j in range(i, W):
                    acc = 0j
                    for m in range(W):
                        acc += Mx[i, m] * np.conj(Mx[j, m])
                    S[i, j] = acc
                    S[j, i] = np.conj(acc)
            for i in range(W):
                rs2 += S[i, i].real
                for j in range(W):
                    obj += (Mx[i, j] * Rh[k, j, i]).real
            # a^H S a = sum_i |a_i|^2 S_ii + 2 Re sum_{i<j} conj(a_i a_j^*) S_ij
            for i in range(W):
                sii = S[i, i].real
                for g in range(Q):
                    r2[g] += sii * Pd[k, i, g]
            for q in range(npair):
                i, j = pairs[q, 0], pairs[q, 1]
                sr = 2.0 * S[i, j].real
                si = 2.0 * S[i, j].imag
                for g in range(Q):
                    r2[g] += sr * Pr[k, q, g] + si * Pi[k, q, g]
        objective[it] = obj
        if it == iters:
            break
        rs = np.sqrt(rs2)
        xi = swbar * s2 * rs
        for g in range(Q):
            r2[g] = np.sqrt(max(r2[g], 0.0))
            xi += sw[g] * p[g] * r2[g]
        for g in range(Q):
            p[g] = p[g] * r2[g] / (sw[g] * xi)
            # decayed powers would otherwise sink into slow subnormal arithmetic
            if p[g] < _FLUSH:
                p[g] = 0.0
        s2 = s2 * rs / (swbar * xi)
    return s2


def _pair_products(A):
    """Real kernel inputs: ``|a_i|^2`` and the upper-pair products ``a_i conj(a_j)``."""
    K, W, Q = A.shape
    pairs = np.array([(i, j) for i in range(W) for j in range(i + 1, W)], dtype=np.int64).reshape(-1, 2)
    Pd = np.ascontiguousarray(np.abs(A) ** 2)
    prod = A[:, pairs[:, 0], :] * np.conj(A[:, pairs[:, 1], :])
    return Pd, np.ascontiguousarray(prod.real), np.ascontiguousarray(prod.imag), pairs


@dataclass
class SSRResult:
    powers: np.ndarray
    noise_var: float
    objective: np.ndarray
    weights: np.ndarray
    noise_weight: float

    def constraint(self) -> float:
        return float(self.weights @ self.powers + self.noise_weight * self.noise_var)


def _floored_inverse_and_sqrt(covs: SampleCovSet, floor: float = 1e-10):
    R = covs.matrices
    w, V = np.linalg.eigh(0.5 * (R + np.conj(np.swapaxes(R, -1, -2))))
    Vh = np.conj(np.swapaxes(V, -1, -2))
    w_clip = np.clip(w, 0.0, None)
    sqrt = (V * np.sqrt(w_clip)[..., None, :]) @ Vh
    wf = np.maximum(w, floor * w[..., -1:])
    if np.any(wf <= 0):
        raise np.linalg.LinAlgError("sample covariance is singular after flooring")
    inv = (V * (1.0 / wf)[..., None, :]) @ Vh
    return inv, sqrt


def ssr_weights(covs: SampleCovSet, dictionary: Dictionary, floor: float = 1e-10):
    """Constraint weights ``w_g`` and ``wbar``, both normalised by ``1/(K W)``."""
    Rinv, _ = _floored_inverse_and_sqrt(covs, floor)
    A = dictionary.steering
    K, W, _ = A.shape
    quad = np.einsum("kwg,kwv,kvg->g", np.conj(A), Rinv, A)
    w = np.real(quad) / (K * W)
    wbar = float(np.sum(np.real(np.trace(Rinv, axis1=-2, axis2=-1)))) / (K * W)
    return w, wbar


def ssr_alternating(
    covs: SampleCovSet,
    dictionary: Dictionary,
    iters: int = DEFAULT_ITERATIONS,
    floor: float = 1e-10,
    init: tuple | None = None,
) -> SSRResult:
    """Run ``iters`` alternating power updates.

    Starts from uniform grid powers and a noise power that takes half of the
    constraint budget, or from ``init = (powers, noise_var)`` to continue an
    earlier run. ``objective[i]`` is the cost at iterate ``i``
    (``objective[0]`` is the initial point), so the trace has ``iters + 1``
    entries.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    Rinv, Rh = _floored_inverse_and_sqrt(covs, floor)
    A = dictionary.steering
    K, W, Q = A.shape
    w = np.real(np.einsum("kwg,kwv,kvg->g", np.conj(A), Rinv, A)) / (K * W)
    wbar = float(np.sum(np.real(np.trace(Rinv, axis1=-2, axis2=-1)))) / (K * W)
    sw, swbar = np.sqrt(w), np.sqrt(wbar)

    if init is None:
        p, s2 = np.full(Q, 0.5 / np.sum(w)), 0.5 / wbar
    else:
        p, s2 = np.array(init[0], dtype=float), float(init[1])
        if p.shape != (Q,) or np.any(p < 0) or s2 < 0:
            raise ValueError("init needs Q non-negative powers and a non-negative noise power")
    objective = np.empty(iters + 1)
    Pd, Pr, Pi, pairs = _pair_products(A)
    s2 = _ssr_kernel(Pd, Pr, Pi, pairs, np.ascontiguousarray(Rh), p, s2, sw, swbar, iters, objective)
    return SSRResult(p, float(s2), objective, w, wbar)


def ssr_estimate(
    covs: SampleCovSet,
    num_sources: int,
    dictionary: Dictionary,
    iters: int = DEFAULT_ITERATIONS,
    result: SSRResult | None = None,
    min_relative_power: float = PEAK_FLOOR,
) -> Estimate:
    """DoAs from the peaks of the SSR power spectrum.

    Local maxima weaker than ``min_relative_power`` times the strongest
    grid power do not count as peaks; unfilled slots take the strongest
    remaining grid points, which splits a merged peak of close sources.
    The source covariance estimate is diagonal with the powers at the picked
    grid points. Pass ``result`` to reuse a spectrum computed earlier.
    """
    if result is None:
        result = ssr_alternating(covs, dictionary, iters)
    idx = peak_indices(result.powers, num_sources, min_relative_power)
    return Estimate(
        dictionary.angles[idx],
        np.diag(result.powers[idx]).astype(complex),
        result.noise_var,
        objective=float(result.objective[-1]),
        diagnostics={"grid_indices": tuple(int(g) for g in idx)},
    )
