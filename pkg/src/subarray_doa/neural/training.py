"""Streaming training of the DoA regression and model-order classification networks.

Every batch is freshly simulated, so no sample is seen twice. Parameter
initialisation and data generation use separate child streams of the
configured seed, which makes runs bit-reproducible.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..geometry import ArrayGeometry, SubarrayScheme, wrap_angle
from ..simulation import (
    ScenarioRanges,
    draw_scenario_batch,
    featurize,
    simulate_batch_covariances,
)
from .losses import cross_entropy_loss, mce_elementwise, mce_loss, permutation_min_loss
from .mlp import Adam, AdamConfig, MlpModel, backward, forward, forward_logits, mlp_init

log = logging.getLogger(__name__)

LOSS_KINDS = ("mce", "perm_mce", "cross_entropy")


@dataclass
class TrainConfig:
    """Hyper-parameters of one training run.

    ``total_samples`` counts simulated samples; the number of optimiser
    steps is ``total_samples // batch_size``.
    """

    num_hidden_layers: int = 3
    hidden_units: int = 256
    batch_size: int = 256
    learning_rate: float = 1e-3
    total_samples: int = 200_000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    loss: str = "mce"
    num_sources: int = 3
    max_order: int = 3
    num_snapshots: int = 10
    ranges: ScenarioRanges = field(default_factory=ScenarioRanges)
    correlation: str = "uncorrelated"
    log_every: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.total_samples < 0:
            raise ValueError("total_samples must be >= 0")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}")
        if isinstance(self.ranges, dict):
            self.ranges = ScenarioRanges(**{**self.ranges, "snr_db": tuple(self.ranges.get("snr_db", (-10.0, 30.0)))})

    @property
    def num_batches(self) -> int:
        return self.total_samples // self.batch_size

    def adam(self) -> AdamConfig:
        return AdamConfig(self.learning_rate, self.beta1, self.beta2, self.eps)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ranges"]["snr_db"] = list(d["ranges"]["snr_db"])
        return d


@dataclass
class TrainResult:
    model: MlpModel
    losses: np.ndarray  # mean per-sample loss of every batch
    samples_seen: int
    metadata: dict


def _streams(seed):
    init_seq, data_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_seq), np.random.default_rng(data_seq)


def _dims(cfg: TrainConfig, input_dim: int, output_dim: int):
    return (input_dim,) + (cfg.hidden_units,) * cfg.num_hidden_layers + (output_dim,)


def _check_warm_start(model, dims, head):
    if model.dims != dims or model.head != head:
        raise ValueError(f"warm-start model {model.dims}/{model.head} does not match {dims}/{head}")
    return model.copy()


def mcenet_batch(cfg: TrainConfig, scheme, geom, rng, batch_size=None):
    """Features and ascending labels of one freshly simulated batch."""
    batch = draw_scenario_batch(
        cfg.num_sources, batch_size or cfg.batch_size, cfg.ranges, rng, cfg.correlation
    )
    X = featurize(simulate_batch_covariances(batch, scheme, geom, cfg.num_snapshots, rng))
    return X, batch.doas


def _mce_objective(kind, labels, out):
    if kind == "mce":
        return mce_loss(labels, out)
    total = 0.0
    grad = np.empty_like(out)
    for b in range(len(out)):
        value, perm = permutation_min_loss(labels[b], out[b])
        total += value
        inv = np.argsort(perm)
        # d/d out[perm[l]] of 2(1 - cos(theta_l - out[perm[l]]))
        grad[b] = -2.0 * np.sin(labels[b][inv] - out[b])
    return total, grad


def train_mcenet(
    cfg: TrainConfig,
    scheme: SubarrayScheme,
    geom: ArrayGeometry,
    warm_start: MlpModel | None = None,
) -> TrainResult:
    """Train the DoA regression network against ascending-sorted labels.

    Args:
        cfg: Training configuration (``loss`` is ``"mce"`` or ``"perm_mce"``).
        scheme: Switching scheme used to simulate data.
        geom: Array geometry.
        warm_start: Optional model to continue training from; it is copied,
            never modified.
    """
    if cfg.loss == "cross_entropy":
        raise ValueError("the DoA network trains on an MCE loss")
    dims = _dims(cfg, scheme.num_subarrays * scheme.num_chains**2, cfg.num_sources)
    init_rng, data_rng = _streams(cfg.seed)
    model = mlp_init(dims, init_rng) if warm_start is None else _check_warm_start(warm_start, dims, "identity")
    opt = Adam(model, cfg.adam())
    losses = np.empty(cfg.num_batches)
    for step in range(cfg.num_batches):
        X, y = mcenet_batch(cfg, scheme, geom, data_rng)
        out = forward(model, X)
        value, grad = _mce_objective(cfg.loss, y, out)
        opt.step(model, backward(model, X, grad / len(X)))
        losses[step] = value / len(X)
        if cfg.log_every and (step + 1) % cfg.log_every == 0:
            log.info("mcenet step %d/%d loss %.4f", step + 1, cfg.num_batches, losses[step])
    if not model.all_finite():
        raise FloatingPointError("training diverged to non-finite weights")
    meta = {"kind": "mcenet", "samples_seen": cfg.num_batches * cfg.batch_size, "config": cfg.to_dict()}
    return TrainResult(model, losses, meta["samples_seen"], meta)


def covnet_batch(cfg: TrainConfig, scheme, geom, rng, batch_size=None):
    """A batch with exactly ``batch_size / (max_order + 1)`` samples per order."""
    C = cfg.max_order + 1
    B = batch_size or cfg.batch_size
    if B % C:
        raise ValueError(f"batch size {B} is not divisible by the {C} model orders")
    per = B // C
    X, y = [], []
    for order in range(C):
        batch = draw_scenario_batch(order, per, cfg.ranges, rng, cfg.correlation)
        X.append(featurize(simulate_batch_covariances(batch, scheme, geom, cfg.num_snapshots, rng)))
        y.append(np.full(per, order))
    return np.concatenate(X), np.concatenate(y)


def train_covnet(
    cfg: TrainConfig,
    scheme: SubarrayScheme,
    geom: ArrayGeometry,
    warm_start: MlpModel | None = None,
) -> TrainResult:
    """Train the model-order classifier with cross-entropy on stratified batches.

    Raises:
        ValueError: If ``max_order < 1`` or the batch size is not divisible
            by the number of classes.
    """
    if cfg.max_order < 1:
        raise ValueError("max_order must be >= 1")
    C = cfg.max_order + 1
    if cfg.batch_size % C:
        raise ValueError(f"batch size {cfg.batch_size} is not divisible by the {C} model orders")
    dims = _dims(cfg, scheme.num_subarrays * scheme.num_chains**2, C)
    init_rng, data_rng = _streams(cfg.seed)
    model = mlp_init(dims, init_rng, head="softmax") if warm_start is None else _check_warm_start(warm_start, dims, "softmax")
    opt = Adam(model, cfg.adam())
    losses = np.empty(cfg.num_batches)
    for step in range(cfg.num_batches):
        X, y = covnet_batch(cfg, scheme, geom, data_rng)
        probs = forward(model, X)
        value, grad = cross_entropy_loss(probs, y)
        opt.step(model, backward(model, X, grad / len(X)))
        losses[step] = value / len(X)
        if cfg.log_every and (step + 1) % cfg.log_every == 0:
            log.info("covnet step %d/%d loss %.4f", step + 1, cfg.num_batches, losses[step])
    if not model.all_finite():
        raise FloatingPointError("training diverged to non-finite weights")
    meta = {"kind": "covnet", "samples_seen": cfg.num_batches * cfg.batch_size, "config": cfg.to_dict()}
    return TrainResult(model, losses, meta["samples_seen"], meta)


def _features(model, covs):
    x = featurize(covs)
    if x.shape[-1] != model.input_dim:
        raise ValueError(f"features have width {x.shape[-1]}, network expects {model.input_dim}")
    return x


def mcenet_predict(model: MlpModel, covs) -> np.ndarray:
    """DoA estimates wrapped into ``[0, 2 pi)`` and sorted ascending.

    Accepts a :class:`SampleCovSet`, a ``(K, W, W)`` array or a
    ``(B, K, W, W)`` batch.
    """
    if model.head != "identity":
        raise ValueError("mcenet_predict needs an identity-head network")
    out = forward(model, _features(model, covs), cache=False)
    return np.sort(wrap_angle(out), axis=-1)


def covnet_predict(model: MlpModel, covs):
    """``(order, posteriors)``; ties go to the smaller order (first argmax)."""
    if model.head != "softmax":
        raise ValueError("covnet_predict needs a softmax-head network")
    probs = forward(model, _features(model, covs), cache=False)
    return np.argmax(probs, axis=-1), probs


def heldout_mce(model: MlpModel, X, labels) -> float:
    """Mean per-sample fixed-order MCE of raw outputs against sorted labels."""
    out = forward_logits(model, X, cache=False)
    return float(np.sum(mce_elementwise(labels, out)) / len(X))


def heldout_accuracy(model: MlpModel, X, labels) -> float:
    probs = forward(model, X, cache=False)
    return float(np.mean(np.argmax(probs, axis=-1) == labels))
