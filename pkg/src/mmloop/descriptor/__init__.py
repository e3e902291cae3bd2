from .loss import LossConfig, pair_distance, triplet_loss, triplet_loss_and_grad
from .network import (ConvStage, NetworkConfig, TowerWeights, backward, forward, init_weights,
                      parse_stages, tiny_config, zero_weights)
from .training import (ArrayResolver, TrainConfig, TrainState, detect_plateau, evaluate_loss,
                       fine_tune_hard, loss_gradients, train, write_train_log)
from .weights_io import import_weights, load_weights, save_weights

__all__ = [
    "LossConfig", "pair_distance", "triplet_loss", "triplet_loss_and_grad",
    "ConvStage", "NetworkConfig", "TowerWeights", "backward", "forward", "init_weights",
    "parse_stages", "tiny_config", "zero_weights",
    "ArrayResolver", "TrainConfig", "TrainState", "detect_plateau", "evaluate_loss",
    "fine_tune_hard", "loss_gradients", "train", "write_train_log",
    "import_weights", "load_weights", "save_weights",
]
