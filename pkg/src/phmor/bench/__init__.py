"""Benchmark models, matrix I/O and the experiment runner."""

from .config import ExperimentConfig
from .experiment import RunArtifacts, certify_prop1_cmd, run_experiment
from .mmio import load_matrices, read_matrix_market, write_matrices, write_matrix_market
from .models import generate_msd_chain

__all__ = ["ExperimentConfig", "RunArtifacts", "certify_prop1_cmd", "run_experiment",
           "load_matrices", "read_matrix_market", "write_matrices", "write_matrix_market",
           "generate_msd_chain"]
