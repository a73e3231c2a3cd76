"""Experiment harness: configs, builtin instances, batch runner and CLI."""

from .config import ExperimentConfig, parse_seeds
from .instances import BUILDERS, Instance, build_instance, policy_class
from .runner import execute, prepare, run_seed

__all__ = ["BUILDERS", "ExperimentConfig", "Instance", "build_instance", "execute", "parse_seeds",
           "policy_class", "prepare", "run_seed"]
