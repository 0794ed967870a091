"""Dense feedforward network with manual backpropagation and Adam.

Layers compute ``h = x @ W + b`` with a rectifier on every hidden layer.
The head is either the identity (regression) or a softmax (classification).
All arithmetic is in 64-bit floats.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HEADS = ("identity", "softmax")


class StaleCacheError(RuntimeError):
    """``backward`` was called without a matching ``forward``."""


@dataclass
class MlpModel:
    """Layered network parameters.

    Attributes:
        dims: Layer widths ``(input, hidden..., output)``.
        head: ``"identity"`` or ``"softmax"``.
        weights: ``(dims[i], dims[i+1])`` matrices.
        biases: ``(dims[i+1],)`` vectors.
    """

    dims: tuple
    head: str
    weights: list
    biases: list
    version: int = 0
    _cache: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if len(self.dims) < 2 or min(self.dims) < 1:
            raise ValueError(f"invalid layer dims {self.dims}")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.dims[i], self.dims[i + 1]) or b.shape != (self.dims[i + 1],):
                raise ValueError(f"layer {i} has shape {W.shape}/{b.shape}, dims say {self.dims}")
        if len(self.weights) != len(self.dims) - 1:
            raise ValueError("one weight matrix per layer is required")

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    @property
    def output_dim(self) -> int:
        return self.dims[-1]

    @property
    def num_parameters(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def parameters(self):
        """Flat list ``[W0, b0, W1, b1, ...]`` of the parameter arrays."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def touch(self):
        """Mark parameters as modified, invalidating cached activations."""
        self.version += 1
        self._cache = None

    def copy(self):
        return MlpModel(
            self.dims,
            self.head,
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
        )

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.parameters())


def mlp_init(dims, rng: np.random.Generator, head: str = "identity") -> MlpModel:
    """Glorot-uniform weights and zero biases."""
    dims = tuple(int(d) for d in dims)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(dims, head, weights, biases)


def softmax(z):
    z = np.asarray(z, dtype=float)
    e = np.exp(z - np.max(z, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def forward_logits(model: MlpModel, x, cache: bool = True):
    """Affine/rectifier chain up to the last pre-activation.

    Args:
        model: Network.
        x: ``(d,)`` or ``(B, d)`` input.
        cache: Keep intermediates for :func:`backward`.

    Raises:
        ValueError: If the input width does not match the network.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.input_dim:
        raise ValueError(f"input has width {x.shape[-1]}, network expects {model.input_dim}")
    acts = [x]
    h = x
    last = len(model.weights) - 1
    for i, (W, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ W + b
        if i < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    if cache:
        model._cache = (model.version, x.copy(), acts)
    return h


def forward(model: MlpModel, x, cache: bool = True):
    """Network output: logits for the identity head, probabilities for softmax."""
    z = forward_logits(model, x, cache=cache)
    return softmax(z) if model.head == "softmax" else z


def backward(model: MlpModel, x, upstream):
    """Parameter gradients of a scalar loss.

    Args:
        model: Network on which :func:`forward` was last run with ``x``.
        x: The same input as in that forward pass.
        upstream: Loss gradient with respect to the last pre-activation
            (the logits), shaped like the output. For a batch the parameter
            gradients are summed over samples.

    Returns:
        ``(weight_grads, bias_grads)`` lists aligned with the model layers.

    Raises:
        StaleCacheError: If the cached forward pass is missing, was run on a
            different input, or predates a parameter update.
    """
    if model._cache is None:
        raise StaleCacheError("no forward pass cached")
    version, cached_x, acts = model._cache
    x = np.asarray(x, dtype=float)
    if version != model.version or cached_x.shape != x.shape or not np.array_equal(cached_x, x):
        raise StaleCacheError("cached forward pass does not match this input and parameter state")
    delta = np.asarray(upstream, dtype=float)
    if delta.shape != acts[-1].shape:
        raise ValueError(f"upstream gradient has shape {delta.shape}, output is {acts[-1].shape}")
    batched = delta.ndim == 2
    gW = [None] * len(model.weights)
    gb = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        a = acts[i]
        if batched:
            gW[i] = a.T @ delta
            gb[i] = delta.sum(axis=0)
        else:
            gW[i] = np.outer(a, delta)
            gb[i] = delta.copy()
        if i:
            delta = (delta @ model.weights[i].T) * (acts[i] > 0.0)
    return gW, gb


@dataclass
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_update(param, grad, m, v, step: int, cfg: AdamConfig):
    """One bias-corrected Adam update, in place on ``param``, ``m`` and ``v``.

    Raises:
        ValueError: If ``step < 1``.
    """
    if step < 1:
        raise ValueError("Adam step counter starts at 1")
    m *= cfg.beta1
    m += (1.0 - cfg.beta1) * grad
    v *= cfg.beta2
    v += (1.0 - cfg.beta2) * grad * grad
    m_hat = m / (1.0 - cfg.beta1**step)
    v_hat = v / (1.0 - cfg.beta2**step)
    param -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)


class Adam:
    """Adam optimiser state for one model."""

    def __init__(self, model: MlpModel, cfg: AdamConfig | None = None):
        self.cfg = cfg or AdamConfig()
        self.m = [np.zeros_like(p) for p in model.parameters()]
        self.v = [np.zeros_like(p) for p in model.parameters()]
        self.step_count = 0

    def step(self, model: MlpModel, grads):
        """Apply ``grads = (weight_grads, bias_grads)`` to ``model``."""
        gW, gb = grads
        flat = []
        for a, c in zip(gW, gb):
            flat += [a, c]
        self.step_count += 1
        for p, g, m, v in zip(model.parameters(), flat, self.m, self.v):
            adam_update(p, g, m, v, self.step_count, self.cfg)
        model.touch()


def adam_step(model: MlpModel, grads, optimizer: Adam) -> MlpModel:
    optimizer.step(model, grads)
    return model
