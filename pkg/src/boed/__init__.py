"""Bayesian optimal experimental design via population-based stochastic search.

Core pieces: design spaces and perturbation kernels (``space``), benchmark
generative models (``models``), expected-utility estimators (``utility``),
the evolutionary optimiser (``search``), reference optimisers
(``baselines``), sampling windows (``windows``), and configuration / trace
IO plus the CLI (``configio``, ``cli``).
"""

from .baselines import MullerConfig, TruncatedGaussianProposal, chain_mode, run_grid_search, run_muller
from .models import (DeathModel, LogisticModel, NormalNormalModel, PKModel,
                     death_transition_prob, logistic_prob, pk_mean)
from .search import AcceptanceRule, RunTrace, Schedule, ScoredDesign, accept, run_insh, spawn
from .space import (ConstraintSet, Design, DesignSpace, PerturbationKernel,
                    enumerate_grid, perturb, sample_initial, satisfies)
from .utility import (ABCConfig, SimulationBank, UtilityEstimate, abc_posterior,
                      abcde_utility, build_bank, default_param_grid, kld_utility,
                      make_abc_utility_sampler, make_abcde_utility, make_sig_utility,
                      sig_nested_mc)
from .windows import SamplingWindows, bootstrap_design, build_windows, window_efficiency

__version__ = "0.1.0"
