"""Kernel-based semi-supervised anomaly detection toolkit.

Hypersphere models over unlabeled-plus-labeled data, convex and
gradient-based trainers with duality diagnostics, active-learning query
strategies, an n-gram payload embedding pipeline, experiment runners,
a CLI and a labeling REST service.
"""

from ._backend import backend_name
from .features import (
    NGramConfig,
    Payload,
    SparseVector,
    TrainingSet,
    cloak,
    dot,
    embed,
    load_dataset,
    save_dataset,
)
from .kernels import KernelMatrix, KernelSpec, cross, gram, is_translation_invariant

__all__ = [
    "backend_name",
    "NGramConfig",
    "Payload",
    "SparseVector",
    "TrainingSet",
    "cloak",
    "dot",
    "embed",
    "load_dataset",
    "save_dataset",
    "KernelMatrix",
    "KernelSpec",
    "cross",
    "gram",
    "is_translation_invariant",
]

__version__ = "0.1.0"
