"""Tensor-train simulations of the one-dimensional Bose-Hubbard chain:
ground states and thermal states, linear ramps across the superfluid
transition, and the analysis stack for correlation lengths and
defect-scaling exponents."""

from ._version import __version__
from .model import ModelParams, local_operators, bond_hamiltonian, \
    trotter_layers, intersector_gap
from .tensor import contract, truncated_svd, gauge, SvdResult
from .mps import (MpsState, TruncationPolicy, product_state, tebd_step,
                  ground_state, intra_sector_gap, expectation)
from .lptn import (LptnState, infinite_temperature_state, cool, real_evolve,
                   expectation_mixed)
from .observables import (SiteStatistics, CorrelationProfile,
                          site_statistics, hopping_correlations,
                          fit_correlation_decay, finite_size_xi,
                          compressibility, superfluid_quantifier,
                          mott_quantifier)
from .quench import (QuenchProtocol, SuddenProtocol, TimescaleRecord,
                     KzAnalysis, ramp_value,
                     freeze_out, effective_exponents, run_quench,
                     fit_kz_exponent, arrhenius_prediction)
from .ed import (ed_spectrum, ed_gibbs_observables, ed_propagate,
                 sudden_quench_correlations)
from .config import ExperimentConfig, parse_config, serialize_config, \
    load_config
from .checkpoint import checkpoint_roundtrip, save_state, load_state
from .runner import run_experiment, resume_experiment

__all__ = [
    "__version__",
    "ModelParams", "local_operators", "bond_hamiltonian", "trotter_layers",
    "intersector_gap",
    "contract", "truncated_svd", "gauge", "SvdResult",
    "MpsState", "TruncationPolicy", "product_state", "tebd_step",
    "ground_state", "intra_sector_gap", "expectation",
    "LptnState", "infinite_temperature_state", "cool", "real_evolve",
    "expectation_mixed",
    "SiteStatistics", "CorrelationProfile", "site_statistics",
    "hopping_correlations", "fit_correlation_decay", "finite_size_xi",
    "compressibility", "superfluid_quantifier", "mott_quantifier",
    "QuenchProtocol", "SuddenProtocol", "TimescaleRecord", "KzAnalysis",
    "ramp_value",
    "freeze_out", "effective_exponents", "run_quench", "fit_kz_exponent",
    "arrhenius_prediction",
    "ed_spectrum", "ed_gibbs_observables", "ed_propagate",
    "sudden_quench_correlations",
    "ExperimentConfig", "parse_config", "serialize_config", "load_config",
    "checkpoint_roundtrip", "save_state", "load_state",
    "run_experiment", "resume_experiment",
]
