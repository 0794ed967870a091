"""From-scratch dense networks for DoA regression and model-order classification."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .losses import cross_entropy_loss, mce_elementwise, mce_loss, permutation_min_loss
from .mlp import (
    Adam,
    AdamConfig,
    MlpModel,
    StaleCacheError,
    adam_step,
    adam_update,
    backward,
    forward,
    forward_logits,
    mlp_init,
    softmax,
)
from .training import (
    TrainConfig,
    TrainResult,
    covnet_batch,
    covnet_predict,
    heldout_accuracy,
    heldout_mce,
    mcenet_batch,
    mcenet_predict,
    train_covnet,
    train_mcenet,
)

__all__ = [
    "Adam",
    "AdamConfig",
    "CheckpointError",
    "MlpModel",
    "StaleCacheError",
    "TrainConfig",
    "TrainResult",
    "adam_step",
    "adam_update",
    "backward",
    "covnet_batch",
    "covnet_predict",
    "cross_entropy_loss",
    "forward",
    "forward_logits",
    "heldout_accuracy",
    "heldout_mce",
    "load_checkpoint",
    "mce_elementwise",
    "mce_loss",
    "mcenet_batch",
    "mcenet_predict",
    "mlp_init",
    "permutation_min_loss",
    "save_checkpoint",
    "softmax",
    "train_covnet",
    "train_mcenet",
]
