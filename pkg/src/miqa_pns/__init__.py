"""Training quality classifiers whose features have high probability of
necessity and sufficiency for the Good class, on synthetic AS-OCT-like data."""

from .autodiff import Tape, Tensor, backward, forward_op
from .metrics import MetricsReport, evaluate
from .nn import Adam, MLP, MlpSpec, ModelTriple, forward_mlp, init_model, init_triple
from .objective import (
    LossBreakdown,
    QualityLabel,
    cross_entropy,
    indicator,
    label_transform,
    monotonicity_violation,
    pns_estimate,
    task_loss,
)
from .synthetic import Grade, ImageSet, SceneParams, generate_dataset, make_split, render, sample_params
from .training import TrainConfig, train

__version__ = "0.1.0"
