"""Brain-network classifier over two graph structures per subject.

One graph thresholds the ROI correlation matrix, the other is learned
end to end through Gumbel-reparameterized edge sampling; both feed
two-layer graph convolutions whose pooled embeddings a small MLP maps
to a disease/control logit.
"""

from dualgraph.autodiff import Tensor
from dualgraph.preprocess import (
    BoldMatrix,
    Dataset,
    generate_synthetic,
    load_dataset,
    pearson_correlation,
    save_dataset,
)
from dualgraph.model import init_model, load_checkpoint, save_checkpoint
from dualgraph.train import (
    Metrics,
    TrainConfig,
    evaluate,
    run_ablation,
    split,
    train_model,
)

__all__ = [
    "Tensor",
    "BoldMatrix",
    "Dataset",
    "generate_synthetic",
    "load_dataset",
    "pearson_correlation",
    "save_dataset",
    "init_model",
    "load_checkpoint",
    "save_checkpoint",
    "Metrics",
    "TrainConfig",
    "evaluate",
    "run_ablation",
    "split",
    "train_model",
]
__version__ = "0.1.0"
