from .features import (FUSED_WIDTH, ObservationFeatures, build_features, fuse)
from .net import (NonFiniteActivation, PolicyNet, PolicyNetConfig, ShapeMismatch,
                  policy_step)
from .ppo import (Adam, NonFiniteGradient, TrainConfig, gae_advantages,
                  ppo_loss_and_grad, ppo_update)

__all__ = [
    "FUSED_WIDTH", "ObservationFeatures", "build_features", "fuse",
    "PolicyNet", "PolicyNetConfig", "policy_step", "ShapeMismatch",
    "NonFiniteActivation", "NonFiniteGradient", "Adam", "TrainConfig",
    "gae_advantages", "ppo_loss_and_grad", "ppo_update",
]
