"""Orchestration layer: configuration, checkpoints, synthetic data,
training stages, evaluation reports, and the command-line interface."""

from .config import Config, load_config, paper_profile
from .checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "Config",
    "load_config",
    "paper_profile",
    "save_checkpoint",
    "load_checkpoint",
]
