from uareg.training.loop import TrainConfig, TrainResult, pair_reg_value, train
from uareg.training.losses import cross_entropy, kl_term, lmr_loss, smooth_reg, total_loss
from uareg.training.optim import AdamW, OptimizerState, adamw_step

__all__ = [
    "AdamW", "OptimizerState", "TrainConfig", "TrainResult", "adamw_step", "cross_entropy",
    "kl_term", "lmr_loss", "pair_reg_value", "smooth_reg", "total_loss", "train",
]
