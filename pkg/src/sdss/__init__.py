"""Semi-supervised node classification on graphs with multi-task
self-supervision and two-stage self-distillation over a two-layer graph
convolutional backbone.
"""

from .data import (
    DataError,
    Dataset,
    SplitSpec,
    generate_planted_partition,
    load_dataset,
    row_normalize_features,
    sample_split,
    save_dataset,
)
from .graph import Graph, NormalizedAdjacency, build_graph, degrees, normalize, spmm
from .linalg import (
    KMeansResult,
    PcaModel,
    glorot_init,
    kmeans,
    log_softmax_rows,
    pca_fit,
    pca_inverse,
    pca_transform,
    relu,
    relu_backward,
    softmax_rows,
)
from .model import (
    ForwardTrace,
    Gradients,
    ModelParams,
    backward,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .partition import balanced_partition, edge_cut
from .pretext import (
    PretextTask,
    make_clustering_task,
    make_completion_task,
    make_degree_task,
    make_partition_task,
)
from .training import (
    AdamState,
    LossConfig,
    TrainReport,
    TrainSettings,
    accuracy,
    adam_init,
    adam_step,
    loss_nc,
    loss_sd_m,
    loss_sd_nc,
    loss_sd_ss,
    loss_ss,
    loss_student,
    loss_teacher,
    predict,
    smooth_l1,
    train_student,
    train_teacher,
)
from .util import derive_seed

__version__ = "0.1.0"

__all__ = [
    "DataError", "Dataset", "SplitSpec", "generate_planted_partition",
    "load_dataset", "row_normalize_features", "sample_split", "save_dataset",
    "Graph", "NormalizedAdjacency", "build_graph", "degrees", "normalize", "spmm",
    "KMeansResult", "PcaModel", "glorot_init", "kmeans", "log_softmax_rows",
    "pca_fit", "pca_inverse", "pca_transform", "relu", "relu_backward", "softmax_rows",
    "ForwardTrace", "Gradients", "ModelParams", "backward", "forward",
    "init_params", "load_checkpoint", "save_checkpoint",
    "balanced_partition", "edge_cut",
    "PretextTask", "make_clustering_task", "make_completion_task",
    "make_degree_task", "make_partition_task",
    "AdamState", "LossConfig", "TrainReport", "TrainSettings", "accuracy",
    "adam_init", "adam_step", "loss_nc", "loss_sd_m", "loss_sd_nc", "loss_sd_ss",
    "loss_ss", "loss_student", "loss_teacher", "predict", "smooth_l1",
    "train_student", "train_teacher", "derive_seed",
]
