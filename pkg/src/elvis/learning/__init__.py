from .checkpoint import load_model, load_tensors, save_model, save_tensors
from .loss import warped_bce
from .optim import OptimState, adamw_step, cosine_lr
from .sampling import Batch, TrainPair, mine_pairs, sample_batch
from .train import TrainConfig, TrainResult, train

__all__ = [
    "Batch", "OptimState", "TrainConfig", "TrainPair", "TrainResult",
    "adamw_step", "cosine_lr", "load_model", "load_tensors", "mine_pairs",
    "sample_batch", "save_model", "save_tensors", "train", "warped_bce",
]
