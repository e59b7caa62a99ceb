from .config import (TrainConfig, apply_overrides, parse_config, save_config,
                     sidecar_path)
from .data import (PairBatch, ResidualImage, ScanPair, batch_from_pairs,
                   make_residual, pairs_from_dataset)
from .inference import infer, infer_batch
from .training import (bae_mae, estimate_age_gap, load_bundle, pretrain_bae,
                       train, train_step, write_log)

__all__ = [
    "TrainConfig", "apply_overrides", "parse_config", "save_config", "sidecar_path",
    "PairBatch", "ResidualImage", "ScanPair", "batch_from_pairs", "make_residual",
    "pairs_from_dataset", "infer", "infer_batch", "bae_mae", "estimate_age_gap",
    "load_bundle", "pretrain_bae", "train", "train_step", "write_log",
]
