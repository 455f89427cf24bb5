"""Asynchronous semi-decentralized federated edge learning simulator."""

import json

from ._sdfeel import (
    ConfigError,
    DivergenceError,
    IoError,
    ValidationError,
    epochs_for,
    loss_and_gradient,
    mixing_matrix,
    psi,
    ring,
    second_eigenvalue_modulus,
    simulate,
    staleness_bound,
    theorem_bound,
    uniform_neighbor_matrix,
    validate_config,
)
from ._sdfeel import evaluate_bound as _evaluate_bound
from ._sdfeel import run_experiment as _run_experiment

__all__ = [
    "ConfigError",
    "DivergenceError",
    "IoError",
    "ValidationError",
    "epochs_for",
    "evaluate_bound",
    "loss_and_gradient",
    "mixing_matrix",
    "psi",
    "ring",
    "run_experiment",
    "second_eigenvalue_modulus",
    "simulate",
    "staleness_bound",
    "theorem_bound",
    "uniform_neighbor_matrix",
    "validate_config",
]


def run_experiment(config_text, out_dir):
    """Runs the configured mode(s), writes outputs to out_dir, returns the summary dict."""
    return json.loads(_run_experiment(config_text, str(out_dir)))


def evaluate_bound(config_text):
    return json.loads(_evaluate_bound(config_text))
