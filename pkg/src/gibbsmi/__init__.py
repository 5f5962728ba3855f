"""Gibbs-distribution mutual-information estimates for small ReLU MLPs."""

from .dataset import Dataset, SynthConfig, generate_synthetic, load_idx, orient, split
from .gibbs import CondDistTable, class_conditional, layer_conditional, marginal
from .infotheory import (
    BoundConfig,
    MiEpochRecord,
    brute_force_mi,
    decompose,
    entropy,
    gen_bound,
    mi_input,
    mi_label,
)
from .nn import MlpParams, accuracy, backward, cross_entropy, forward, init_mlp, train

__version__ = "0.1.0"
