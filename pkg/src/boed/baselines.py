"""Reference optimisers: utility-targeting MCMC on the design space, and
exhaustive grid search used as the oracle in validation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .search import ScoredDesign
from .space import Design, DesignSpace, enumerate_grid, _feasible_values
from .utility import as_rng


@dataclass
class TruncatedGaussianProposal:
    """Random-walk proposal truncated to the box; the Hastings correction uses
    the per-coordinate truncated-normal normalisation. Exact for box-only
    constraints (any dimension); ordering constraints are handled by the
    rejection loop in ``sample`` and ignored in the density, which is exact in
    one dimension.
    """

    scale: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    sort: bool = False
    max_attempts: int = 10_000

    def __post_init__(self):
        self.scale = np.atleast_1d(np.asarray(self.scale, dtype=float))
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))

    def sample(self, centre, rng):
        for _ in range(self.max_attempts):
            values = centre + self.scale * rng.standard_normal(centre.size)
            if self.sort:
                values = np.sort(values)
            if np.all(values >= self.lower) and np.all(values <= self.upper):
                return values
        raise RuntimeError("proposal rejection budget exhausted")

    def log_density(self, proposed, centre):
        z = stats.norm.cdf((self.upper - centre) / self.scale) - stats.norm.cdf(
            (self.lower - centre) / self.scale
        )
        return float(
            np.sum(stats.norm.logpdf(proposed, loc=centre, scale=self.scale) - np.log(z))
        )


@dataclass
class MullerConfig:
    chain_length: int
    proposal: object
    burn_in: int = 0

    def __post_init__(self):
        if not self.chain_length > self.burn_in >= 0:
            raise ValueError("need chain_length > burn_in >= 0")


def run_muller(space: DesignSpace, utility_sample_fn, config: MullerConfig, seed=None,
               initial=None) -> np.ndarray:
    """Metropolis-Hastings chain whose stationary design marginal is
    proportional to expected utility. Each step uses a single utility sample
    at the proposed design (the augmented-chain construction); returns the
    post-burn-in design chain, shape (steps, dim).

    ``utility_sample_fn(design_values, rng) -> float`` must be non-negative.
    """
    rng = as_rng(seed)
    cons = space.constraints
    if initial is None:
        from .space import sample_initial

        current = sample_initial(space, 1, rng=rng)[0].values
    else:
        current = np.atleast_1d(np.asarray(initial, dtype=float))
    u_cur = float(utility_sample_fn(current, rng))
    if u_cur < 0:
        raise ValueError("utility samples must be non-negative; shift the utility")

    chain = np.empty((config.chain_length, space.dimension))
    for i in range(config.chain_length):
        proposed = config.proposal.sample(current, rng)
        if not _feasible_values(cons, proposed):
            chain[i] = current
            continue
        u_new = float(utility_sample_fn(proposed, rng))
        if u_new < 0:
            raise ValueError("utility samples must be non-negative; shift the utility")
        log_ratio = (
            (np.log(u_new) if u_new > 0 else -np.inf)
            - (np.log(u_cur) if u_cur > 0 else -np.inf)
            + config.proposal.log_density(current, proposed)
            - config.proposal.log_density(proposed, current)
        )
        if np.log(rng.random()) < log_ratio:
            current, u_cur = proposed, u_new
        chain[i] = current
    return chain[config.burn_in :]


def chain_mode(chain: np.ndarray) -> np.ndarray:
    """Per-coordinate histogram mode with Freedman-Diaconis bin width."""
    chain = np.atleast_2d(chain)
    modes = np.empty(chain.shape[1])
    for j in range(chain.shape[1]):
        counts, edges = np.histogram(chain[:, j], bins="fd")
        k = int(np.argmax(counts))
        modes[j] = 0.5 * (edges[k] + edges[k + 1])
    return modes


def run_grid_search(space: DesignSpace, spacing: float, utility_fn, seed: int = 0):
    """Score every lattice design; returns (best ScoredDesign, all ScoredDesign)."""
    designs = enumerate_grid(space, spacing)
    surface = []
    for i, design in enumerate(designs):
        est = utility_fn(design, seed + i)
        surface.append(ScoredDesign(design, est, generation=0))
    best = max(surface, key=lambda s: s.value)
    return best, surface
