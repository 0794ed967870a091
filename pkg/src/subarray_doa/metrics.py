"""Periodic error metrics with permutation association."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .geometry import TWO_PI

MAX_ASSOCIATION_ORDER = 6


def wrap_to_pi(x):
    """Map angles into ``[-pi, pi)``."""
    return np.mod(np.asarray(x, dtype=float) + np.pi, TWO_PI) - np.pi


@dataclass
class PeriodicError:
    errors: np.ndarray  # wrapped theta_l - theta_hat[perm[l]]
    permutation: tuple
    rmspe: float


def periodic_error(theta, theta_hat) -> PeriodicError:
    """Per-source wrapped errors under the best association, and their RMS.

    The association minimises the summed squared wrapped error over all
    permutations; ties go to the lexicographically smallest one.

    Raises:
        ValueError: On length mismatch or more than six sources.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    if theta.shape != theta_hat.shape or theta.ndim != 1:
        raise ValueError("theta and theta_hat must be equal-length vectors")
    L = len(theta)
    if L == 0:
        return PeriodicError(np.zeros(0), (), 0.0)
    if L > MAX_ASSOCIATION_ORDER:
        raise ValueError(f"association supports at most {MAX_ASSOCIATION_ORDER} sources")
    perms = np.array(list(itertools.permutations(range(L))), dtype=int)
    d = wrap_to_pi(theta[None, :] - theta_hat[perms])
    best = int(np.argmin(np.sum(d**2, axis=1)))
    err = d[best]
    return PeriodicError(err, tuple(int(i) for i in perms[best]), float(np.sqrt(np.mean(err**2))))


def rmspe(theta, theta_hat) -> float:
    return periodic_error(theta, theta_hat).rmspe


def pooled_rmspe(trial_rmspes) -> float:
    """RMS over trials of per-trial RMSPE values."""
    x = np.asarray(trial_rmspes, dtype=float)
    if x.size == 0:
        raise ValueError("no trials")
    return float(np.sqrt(np.mean(x**2)))


def top_quantile_rmspe(trial_rmspes, q: float = 0.9) -> float:
    """Pooled RMSPE of the ``floor(q T)`` best trials (at least one).

    Raises:
        ValueError: If the input is empty or ``q`` is outside ``(0, 1]``.
    """
    x = np.sort(np.asarray(trial_rmspes, dtype=float))
    if x.size == 0:
        raise ValueError("no trials")
    if not 0.0 < q <= 1.0:
        raise ValueError("q must lie in (0, 1]")
    keep = max(1, int(np.floor(q * x.size + 1e-9)))
    return pooled_rmspe(x[:keep])


def empirical_cdf(values):
    """Right-continuous ECDF as ``(sorted unique values, fractions)``."""
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("no values")
    uniq, counts = np.unique(x, return_counts=True)
    return uniq, np.cumsum(counts) / x.size


def ecdf_at(values, x) -> float:
    v = np.asarray(values, dtype=float)
    return float(np.mean(v <= x))


def accuracy(true_orders, estimated_orders) -> float:
    t = np.asarray(true_orders)
    e = np.asarray(estimated_orders)
    if t.shape != e.shape or t.size == 0:
        raise ValueError("need equally many non-zero labels and estimates")
    return float(np.mean(t == e))
