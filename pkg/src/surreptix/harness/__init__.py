"""Synthetic corpus, distortion metrics, matched-accuracy analysis and sweeps."""

from .analysis import DEFAULT_GRID, at_accuracy, eps_at_accuracy, extended_grid, value_at_eps
from .corpus import Corpus, generate_corpus, load_corpus, save_corpus
from .metrics import distortion, linf
from .sweep import SweepSpec, default_spec_dict, run_sweep, write_sweep_csv

__all__ = [
    "DEFAULT_GRID", "Corpus", "SweepSpec", "at_accuracy", "default_spec_dict", "distortion",
    "eps_at_accuracy", "extended_grid", "generate_corpus", "linf", "load_corpus", "run_sweep",
    "save_corpus", "value_at_eps", "write_sweep_csv",
]
