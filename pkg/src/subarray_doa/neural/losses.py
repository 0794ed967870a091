"""Training and evaluation losses for the DoA and model-order networks."""

from __future__ import annotations

import itertools

import numpy as np

MAX_PERMUTATION_ORDER = 6


def mce_elementwise(theta, theta_hat):
    """``2 (1 - cos(theta - theta_hat))`` entry by entry."""
    return 2.0 * (1.0 - np.cos(np.asarray(theta, float) - np.asarray(theta_hat, float)))


def mce_loss(theta, theta_hat):
    """Summed mean cyclic error in a fixed order and its gradient.

    Args:
        theta: ``(L,)`` or ``(B, L)`` labels.
        theta_hat: Estimates of the same shape.

    Returns:
        ``(loss, grad)``: the sum over all entries and the gradient with
        respect to ``theta_hat``.

    Raises:
        ValueError: On shape mismatch.
    """
    theta = np.asarray(theta, dtype=float)
    theta_hat = np.asarray(theta_hat, dtype=float)
    if theta.shape != theta_hat.shape:
        raise ValueError(f"shape mismatch {theta.shape} vs {theta_hat.shape}")
    d = theta - theta_hat
    return float(np.sum(2.0 * (1.0 - np.cos(d)))), -2.0 * np.sin(d)


def permutation_min_loss(theta, theta_hat, elementwise=mce_elementwise):
    """Minimum summed element-wise loss over all assignments.

    Args:
        theta: ``(L,)`` labels.
        theta_hat: ``(L,)`` estimates.
        elementwise: Vectorised element-wise loss ``f(theta, theta_hat)``.

    Returns:
        ``(loss, perm)`` where ``theta_hat[perm]`` is matched to ``theta``;
        ties go to the lexicographically smallest permutation.

    Raises:
        ValueError: On length mismatch or ``L > 6``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    if theta.shape != theta_hat.shape or theta.ndim != 1:
        raise ValueError("theta and theta_hat must be equal-length vectors")
    L = len(theta)
    if L > MAX_PERMUTATION_ORDER:
        raise ValueError(f"exhaustive assignment supports L <= {MAX_PERMUTATION_ORDER}, got {L}")
    perms = np.array(list(itertools.permutations(range(L))), dtype=int).reshape(-1, L)
    # pairwise costs once, then gather per permutation
    cost = elementwise(theta[:, None], theta_hat[None, :])
    totals = cost[np.arange(L), perms].sum(axis=1) if L else np.zeros(1)
    best = int(np.argmin(totals))  # permutations() is lexicographic, argmin takes the first
    return float(totals[best]), tuple(int(i) for i in perms[best])


def cross_entropy_loss(probs, label):
    """``-ln probs[label]`` and the softmax logit gradient ``probs - onehot``.

    Args:
        probs: ``(C,)`` or ``(B, C)`` class probabilities from a softmax head.
        label: Class index, or ``(B,)`` indices.

    Returns:
        ``(loss, logit_grad)``; for a batch the loss is summed.

    Raises:
        ValueError: If a label is outside ``0..C-1``.
    """
    probs = np.asarray(probs, dtype=float)
    C = probs.shape[-1]
    label = np.asarray(label, dtype=int)
    if np.any(label < 0) or np.any(label >= C):
        raise ValueError(f"label out of range 0..{C - 1}")
    onehot = np.zeros_like(probs)
    if probs.ndim == 1:
        onehot[int(label)] = 1.0
        picked = probs[int(label)]
    else:
        onehot[np.arange(len(label)), label] = 1.0
        picked = probs[np.arange(len(label)), label]
    with np.errstate(divide="ignore"):
        loss = float(-np.sum(np.log(picked)))
    return loss, probs - onehot
