"""Decentralized and federated ADMM simulator with communication accounting."""
from .channel import LinkBudget, finite_blocklength_rate, shannon_rate, transmit_energy
from .compression import CensorSchedule, QuantizerState, dequantize, quantize
from .engine import VARIANTS, SolverConfig, run
from .errors import (ComparisonError, ConfigError, DivergenceError, GadmmLabError, InvalidArgumentError,
                     SingularSystemError)
from .harness import ExperimentConfig, compare_variants, load_config, recipe, run_experiment
from .problem import ProblemInstance, centralized_solution, load_csv_shards, make_synthetic
from .topology import Topology, build_chain, random_bipartite, reshuffle, validate_bipartite
from .trace import MetricsTrace

__version__ = "0.1.0"
