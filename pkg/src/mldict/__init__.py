"""Multilevel dictionary learning, multilevel pursuit and their applications."""

from .exceptions import DataError, MLDError, NumericalError
from .khyperline import ClusteringConfig, KHyperlineClustering
from .mld import (
    MdlConfig,
    MultilevelDictionary,
    MultilevelDictionaryLearning,
    RobustMultilevelDictionary,
    RobustMultilevelDictionaryLearning,
    estimate_level_sizes,
    train,
    train_robust,
)
from .pursuit import EnsembleCode, SparseCode, mulp_encode, reconstruct, rmld_encode
from .subspace import SparseCodeLDE, SparseCodeLPP

__version__ = "0.1.0"

__all__ = [
    "ClusteringConfig",
    "DataError",
    "EnsembleCode",
    "KHyperlineClustering",
    "MLDError",
    "MdlConfig",
    "MultilevelDictionary",
    "MultilevelDictionaryLearning",
    "NumericalError",
    "RobustMultilevelDictionary",
    "RobustMultilevelDictionaryLearning",
    "SparseCode",
    "SparseCodeLDE",
    "SparseCodeLPP",
    "estimate_level_sizes",
    "mulp_encode",
    "reconstruct",
    "rmld_encode",
    "train",
    "train_robust",
]
