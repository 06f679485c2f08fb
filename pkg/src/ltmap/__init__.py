"""Sparse triangular transport-map sampling for the 2D phi^4 lattice field theory.

The package builds monotone triangular (Knothe-Rosenblatt) maps whose
components are rectified neural networks integrated by Gauss-Legendre
quadrature, trains them against the Boltzmann distribution by reverse-KL
minimization, and corrects residual model error with independent
Metropolis-Hastings, benchmarked against HMC.
"""

from .config import ConfigError, RunConfig, load_run_config
from .estimator import TriangularMapSampler
from .io import load_chain, load_map, save_chain, save_map
from .lattice import LatticeGeometry, PhiFourParams, action, action_gradient
from .metrics import (bootstrap_ci, energy, error_vs_samples, ess,
                      importance_log_weights, magnetization, susceptibility)
from .ordering import (ConditioningSets, NeighborhoodSpec, Ordering, conditioning_sets,
                       dense_conditioning_sets, exact_dependency_sets, fill_in_stats,
                       make_ordering, neighborhood)
from .samplers import ChainRecord, HmcConfig, ImhConfig, hmc_run, imh_run, leapfrog
from .training import TrainConfig, TrainRecord, reverse_kl_loss, train
from .transport import (MapOutput, QuadratureRule, TriangularMap, component_forward,
                        component_inverse, gauss_legendre, make_triangular_map,
                        map_forward, map_forward_backward, map_get_params, map_inverse,
                        map_n_params, map_set_params, model_logdensity)

__version__ = "0.1.0"

__all__ = [
    "ChainRecord", "ConditioningSets", "ConfigError", "HmcConfig", "ImhConfig",
    "LatticeGeometry", "MapOutput", "NeighborhoodSpec", "Ordering", "PhiFourParams",
    "QuadratureRule", "RunConfig", "TrainConfig", "TrainRecord", "TriangularMap",
    "TriangularMapSampler", "action", "action_gradient", "bootstrap_ci",
    "component_forward", "component_inverse", "conditioning_sets",
    "dense_conditioning_sets", "energy", "error_vs_samples", "ess",
    "exact_dependency_sets", "fill_in_stats", "gauss_legendre", "hmc_run", "imh_run",
    "importance_log_weights", "leapfrog", "load_chain", "load_map", "load_run_config",
    "magnetization", "make_ordering", "make_triangular_map", "map_forward",
    "map_forward_backward", "map_get_params", "map_inverse", "map_n_params",
    "map_set_params", "model_logdensity", "neighborhood", "reverse_kl_loss",
    "save_chain", "save_map", "susceptibility", "train",
]
