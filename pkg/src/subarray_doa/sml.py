"""Stochastic maximum-likelihood objective and its block-coordinate ascent.

The log-likelihood is scaled by the snapshot count,

    L(c) = -N * sum_k [ ln det R_k + tr(R_k^{-1} Rhat_k) ],

with ``R_k = G_k A(theta) R_s A(theta)^H G_k^T + sigma^2 I``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import TWO_PI, ArrayGeometry, SubarrayScheme, steering_derivative, steering_vector, wrap_angle
from .results import Estimate
from .simulation import SampleCovSet, Scenario

NOISE_FLOOR = 1e-8


class SingularCovarianceError(np.linalg.LinAlgError):
    """A model covariance matrix is not positive definite."""


@dataclass
class ParamVector:
    """SML parameters: DoAs, source covariance and noise power."""

    theta: np.ndarray
    source_cov: np.ndarray
    noise_var: float

    def __post_init__(self):
        self.theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        L = len(self.theta)
        self.source_cov = np.asarray(self.source_cov, dtype=complex).reshape(L, L)
        self.noise_var = float(self.noise_var)

    @property
    def num_sources(self) -> int:
        return len(self.theta)

    @classmethod
    def from_scenario(cls, scenario: Scenario):
        return cls(scenario.doas.copy(), scenario.source_cov.copy(), scenario.noise_var)

    def copy(self):
        return ParamVector(self.theta.copy(), self.source_cov.copy(), self.noise_var)


@dataclass
class ModelCovSet:
    """Model covariances ``(K, W, W)`` with a lazily computed Cholesky factor."""

    matrices: np.ndarray

    @cached_property
    def cholesky(self) -> np.ndarray:
        try:
            return np.linalg.cholesky(self.matrices)
        except np.linalg.LinAlgError as exc:
            raise SingularCovarianceError("model covariance is not positive definite") from exc


def _hermitian(X):
    return 0.5 * (X + np.conj(np.swapaxes(X, -1, -2)))


def _subarray_steering(theta, scheme, geom):
    """``(K, W, L)`` stack of ``G_k A(theta)``."""
    return steering_vector(geom, theta).reshape(geom.num_antennas, -1)[scheme.index_array]


def _model_from_steering(B, R_s, noise_var):
    W = B.shape[1]
    R = B @ R_s @ np.conj(np.swapaxes(B, -1, -2))
    R = _hermitian(R)
    R[:, np.arange(W), np.arange(W)] += noise_var
    return R


def model_covariances(c: ParamVector, scheme: SubarrayScheme, geom: ArrayGeometry) -> ModelCovSet:
    B = _subarray_steering(c.theta, scheme, geom)
    return ModelCovSet(_model_from_steering(B, c.source_cov, c.noise_var))


def _loglik_from_model(R, Rhat, N):
    try:
        C = np.linalg.cholesky(R)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError("model covariance is not positive definite") from exc
    logdet = 2.0 * np.sum(np.log(np.real(np.diagonal(C, axis1=-2, axis2=-1))))
    Ri = np.linalg.inv(R)
    tr = np.sum(np.real(Ri * np.swapaxes(Rhat, -1, -2)))
    return -N * (logdet + tr), Ri


def log_likelihood(c: ParamVector, covs: SampleCovSet, scheme: SubarrayScheme, geom: ArrayGeometry) -> float:
    """N-scaled SML log-likelihood, evaluated through Cholesky factors.

    Raises:
        SingularCovarianceError: If any model covariance is not positive
            definite.
    """
    R = model_covariances(c, scheme, geom).matrices
    value, _ = _loglik_from_model(R, covs.matrices, covs.num_snapshots)
    return float(value)


def noise_only_log_likelihood(covs: SampleCovSet):
    """Closed-form ``L = 0`` fit ``sigma^2 = sum_k tr(Rhat_k) / (K W)``.

    Returns:
        ``(log_likelihood, sigma2)``.
    """
    R = covs.matrices
    K, W = R.shape[0], R.shape[1]
    tr = float(np.sum(np.real(np.trace(R, axis1=-2, axis2=-1))))
    s2 = max(tr / (K * W), NOISE_FLOOR)
    value = -covs.num_snapshots * (K * W * math.log(s2) + tr / s2)
    return value, s2


@dataclass
class Gradient:
    """Gradient blocks of the log-likelihood.

    ``source_cov`` is the Hermitian matrix ``Gamma`` such that the
    directional derivative along a Hermitian ``E`` is ``Re tr(Gamma E)``.
    Entry-wise, ``dL/d[R_s]_ij = Gamma_ji``.
    """

    theta: np.ndarray
    source_cov: np.ndarray
    noise_var: float


def _dl_dr(Ri, Rhat, N):
    return _hermitian(-N * (Ri - Ri @ Rhat @ Ri))


def _grad_theta(D, B, Bdot, R_s):
    Bh = np.conj(np.swapaxes(B, -1, -2))
    T = np.sum(Bh @ D @ Bdot, axis=0)
    return 2.0 * np.real(np.diagonal(R_s @ T))


def _grad_source(D, B):
    Bh = np.conj(np.swapaxes(B, -1, -2))
    return _hermitian(np.sum(Bh @ D @ B, axis=0))


def _grad_noise(D):
    return float(np.sum(np.real(np.trace(D, axis1=-2, axis2=-1))))


def gradient(c: ParamVector, covs: SampleCovSet, scheme: SubarrayScheme, geom: ArrayGeometry) -> Gradient:
    """Analytic gradient of :func:`log_likelihood` with respect to all blocks."""
    B = _subarray_steering(c.theta, scheme, geom)
    Bdot = steering_derivative(geom, c.theta).reshape(geom.num_antennas, -1)[scheme.index_array]
    R = _model_from_steering(B, c.source_cov, c.noise_var)
    _, Ri = _loglik_from_model(R, covs.matrices, covs.num_snapshots)
    D = _dl_dr(Ri, covs.matrices, covs.num_snapshots)
    return Gradient(_grad_theta(D, B, Bdot, c.source_cov), _grad_source(D, B), _grad_noise(D))


def _project_psd(R_s):
    R_s = _hermitian(R_s)
    if R_s.size == 0:
        return R_s
    w, V = np.linalg.eigh(R_s)
    if w[0] >= 0.0:
        return R_s
    w = np.clip(w, 0.0, None)
    return _hermitian((V * w) @ np.conj(V.T))


def project_feasible(c: ParamVector, noise_floor: float = NOISE_FLOOR) -> ParamVector:
    """Wrap DoAs, clip ``R_s`` to the PSD cone and floor the noise power."""
    return ParamVector(
        wrap_angle(c.theta),
        _project_psd(c.source_cov),
        max(c.noise_var, noise_floor),
    )


@dataclass
class StepPolicy:
    """Per-block backtracking line search settings.

    Every block starts from twice its previously accepted step and halves
    until the step gains at least ``sufficient_increase`` times the
    first-order prediction (Armijo rule). ``sufficient_increase=0`` only asks
    for a likelihood that does not decrease, which on sharp likelihoods
    (high SNR, many snapshots) accepts overshooting steps that land on a
    ridge far from the maximum.
    """

    theta: float = 1e-2
    source_cov: float = 1e-2
    noise_var: float = 1e-3
    growth: float = 2.0
    max_halvings: int = 30
    sufficient_increase: float = 0.1


@dataclass
class AscentResult:
    params: ParamVector
    trace: np.ndarray
    iterations: int
    converged: bool
    steps: dict = field(default_factory=dict)

    @property
    def log_likelihood(self) -> float:
        return float(self.trace[-1])


class _Problem:
    """Likelihood evaluations with cached per-point intermediates."""

    def __init__(self, covs, scheme, geom):
        self.Rhat = covs.matrices
        self.N = covs.num_snapshots
        self.idx = scheme.index_array
        self.geom = geom
        self.M = geom.num_antennas

    def steering(self, theta):
        return steering_vector(self.geom, theta).reshape(self.M, -1)[self.idx]

    def evaluate(self, theta, R_s, s2, B=None):
        if B is None:
            B = self.steering(theta)
        R = _model_from_steering(B, R_s, s2)
        value, Ri = _loglik_from_model(R, self.Rhat, self.N)
        return float(value), {"B": B, "Ri": Ri}

    def dl_dr(self, point):
        if "D" not in point:
            point["D"] = _dl_dr(point["Ri"], self.Rhat, self.N)
        return point["D"]


def _line_search(value, step0, candidate, evaluate, max_halvings, gain, c):
    """Backtrack from ``step0``; return ``(accepted, value, params, point, step)``.

    ``gain(params)`` is the first-order predicted increase of a candidate.
    """
    step = step0
    for _ in range(max_halvings + 1):
        params = candidate(step)
        try:
            new_value, point = evaluate(params)
        except SingularCovarianceError:
            new_value = -np.inf
        if new_value >= value and new_value >= value + c * gain(params):
            return True, new_value, params, point, step
        step *= 0.5
    return False, value, None, None, step


def block_coordinate_ascent(
    c0: ParamVector,
    covs: SampleCovSet,
    scheme: SubarrayScheme,
    geom: ArrayGeometry,
    policy: StepPolicy | None = None,
    max_iter: int = 5000,
    tol: float = 1e-6,
    trace_writer=None,
) -> AscentResult:
    """Alternate single gradient steps on the DoA, source-covariance and noise blocks.

    Each block step is followed by the feasibility projection and accepted
    only if the likelihood does not decrease. The loop stops once a full
    sweep improves the log-likelihood by less than ``tol`` or after
    ``max_iter`` sweeps.

    Args:
        c0: Feasible starting point.
        covs: Sample covariances.
        scheme: Switching scheme.
        geom: Array geometry.
        policy: Step-size settings.
        max_iter: Cap on the number of sweeps.
        tol: Absolute log-likelihood improvement that ends the loop.
        trace_writer: Optional text stream receiving ``iteration,L,alpha_theta,
            alpha_s,alpha_sigma`` rows.

    Returns:
        :class:`AscentResult` with the final point and the non-decreasing
        trace of log-likelihood values (initial value first).
    """
    policy = policy or StepPolicy()
    prob = _Problem(covs, scheme, geom)
    c = project_feasible(c0)
    th, Rs, s2 = c.theta, c.source_cov, c.noise_var
    value, point = prob.evaluate(th, Rs, s2)
    trace = [value]
    steps = {"theta": policy.theta, "source_cov": policy.source_cov, "noise_var": policy.noise_var}
    first = {"theta": True, "source_cov": True, "noise_var": True}
    L = len(th)
    if trace_writer is not None:
        trace_writer.write("iteration,log_likelihood,alpha_theta,alpha_s,alpha_sigma\n")
        trace_writer.write(f"0,{value!r},{steps['theta']!r},{steps['source_cov']!r},{steps['noise_var']!r}\n")

    def start(name):
        s = steps[name] if first[name] else steps[name] * policy.growth
        first[name] = False
        return s

    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        start_value = value

        if L:
            D = prob.dl_dr(point)
            Bdot = steering_derivative(geom, th).reshape(prob.M, -1)[prob.idx]
            g_th = _grad_theta(D, point["B"], Bdot, Rs)
            if np.any(g_th):
                ok, value, new, new_point, step = _line_search(
                    value,
                    start("theta"),
                    lambda a: wrap_angle(th + a * g_th),
                    lambda t: prob.evaluate(t, Rs, s2),
                    policy.max_halvings,
                    lambda t: float(g_th @ (np.mod(t - th + np.pi, TWO_PI) - np.pi)),
                    policy.sufficient_increase,
                )
                steps["theta"] = step
                if ok:
                    th, point = new, new_point

            D = prob.dl_dr(point)
            g_s = _grad_source(D, point["B"])
            if np.any(g_s):
                B = point["B"]
                ok, value, new, new_point, step = _line_search(
                    value,
                    start("source_cov"),
                    lambda a: _project_psd(Rs + a * g_s),
                    lambda r: prob.evaluate(th, r, s2, B=B),
                    policy.max_halvings,
                    lambda r: float(np.real(np.sum(np.conj(g_s) * (r - Rs)))),
                    policy.sufficient_increase,
                )
                steps["source_cov"] = step
                if ok:
                    Rs, point = new, new_point

        D = prob.dl_dr(point)
        g_n = _grad_noise(D)
        if g_n != 0.0:
            B = point["B"]
            ok, value, new, new_point, step = _line_search(
                value,
                start("noise_var"),
                lambda a: max(s2 + a * g_n, NOISE_FLOOR),
                lambda s: prob.evaluate(th, Rs, s, B=B),
                policy.max_halvings,
                lambda s: g_n * (s - s2),
                policy.sufficient_increase,
            )
            steps["noise_var"] = step
            if ok:
                s2, point = new, new_point

        trace.append(value)
        if trace_writer is not None:
            trace_writer.write(
                f"{it},{value!r},{steps['theta']!r},{steps['source_cov']!r},{steps['noise_var']!r}\n"
            )
        if value - start_value < tol:
            converged = True
            break

    return AscentResult(ParamVector(th, Rs, s2), np.asarray(trace), it, converged, dict(steps))


def genie_ml(
    truth: Scenario,
    covs: SampleCovSet,
    scheme: SubarrayScheme,
    geom: ArrayGeometry,
    **ascent_kwargs,
) -> Estimate:
    """Local likelihood maximum closest to the true parameters.

    Starts the ascent at the true DoAs, source covariance and noise power;
    acts as a practical performance bound.
    """
    c0 = ParamVector.from_scenario(truth)
    if c0.num_sources != len(truth.doas):
        raise ValueError("truth dimensions are inconsistent")
    res = block_coordinate_ascent(c0, covs, scheme, geom, **ascent_kwargs)
    p = res.params
    return Estimate(
        p.theta,
        p.source_cov,
        p.noise_var,
        objective=res.log_likelihood,
        diagnostics={"iterations": res.iterations, "converged": res.converged},
    )
