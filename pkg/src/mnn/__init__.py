"""Multiscale neural networks built on hierarchical matrices."""
from .errors import ConfigError, NumericalError
from .hierarchy import DyadicPartition, build_partition, interaction_list, neighbor_list
from .hmatrix import HMatrixFactors, compress, hmatrix_apply, hmatrix_apply_2d, param_count_h
from .model import MnnConfig, MultiscaleNet, build_mnn, build_plain_cnn, load_from_hmatrix, param_count_mnn

__all__ = [
    "ConfigError",
    "NumericalError",
    "DyadicPartition",
    "build_partition",
    "neighbor_list",
    "interaction_list",
    "HMatrixFactors",
    "compress",
    "hmatrix_apply",
    "hmatrix_apply_2d",
    "param_count_h",
    "MnnConfig",
    "MultiscaleNet",
    "build_mnn",
    "build_plain_cnn",
    "load_from_hmatrix",
    "param_count_mnn",
]
__version__ = "0.1.0"
