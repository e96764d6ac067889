"""Random potentials and the solutions the networks learn to predict."""
from .dataset import Dataset, gen_dataset
from .ks import KsProblem, ks_map, sample_potential_ks
from .nlse import NlseProblem, sample_potential_nlse, solve_nlse_ground_state
from .spectral import fourier_interp, laplacian_matrix

__all__ = [
    "Dataset",
    "gen_dataset",
    "KsProblem",
    "ks_map",
    "sample_potential_ks",
    "NlseProblem",
    "sample_potential_nlse",
    "solve_nlse_ground_state",
    "fourier_interp",
    "laplacian_matrix",
]
