from .model import (
    MASK_VALUE,
    EdgeFeatures,
    ParamStore,
    WalkGNN,
    WalkGNNConfig,
    assemble_edge_features,
    build_filters,
    init_params,
    initial_state,
    mask_scores,
    pairwise_loss,
    ranknet_loss,
    walk_conv,
    walk_count_mode,
    walkgnn_forward,
)
from .tensor import Tensor, TapeError, count_ops
from .train import (
    OptimizerConfig,
    TrainHistory,
    TrainingDiverged,
    load_checkpoint,
    save_checkpoint,
    train,
)
