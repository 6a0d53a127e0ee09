"""Hierarchical sparse coding of word-context PMI matrices."""
from .corpus import (
    CooccurrencePairs,
    PmiMatrix,
    Vocabulary,
    build_vocabulary,
    compute_pmi,
    count_cooccurrences,
    read_corpus,
)
from .forest import Forest, build_default_forest, descendants, flat_forest, omega, parse_forest
from .prox import ProxPlan, forest_prox, group_threshold, l1_prox
from .trainer import (
    DivergenceError,
    EntrySampler,
    TrainConfig,
    TrainReport,
    build_sampler,
    nonzero_fraction,
    objective,
    sample_batch,
    sgd_step,
    train,
)

__version__ = "0.1.0"
