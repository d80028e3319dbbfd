"""Sampling windows: per-coordinate ranges built from the top designs, and
bootstrap observation schedules drawn from them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .space import ConstraintSet, Design, _feasible_values
from .utility import as_rng


class InfeasibleWindowsError(RuntimeError):
    pass


@dataclass
class SamplingWindows:
    low: np.ndarray  # (dim,)
    high: np.ndarray  # (dim,)
    candidates: np.ndarray  # (K, dim), the source designs' coordinates

    @property
    def k(self) -> int:
        return self.candidates.shape[0]

    @property
    def dimension(self) -> int:
        return self.candidates.shape[1]


def build_windows(top, k: int) -> SamplingWindows:
    """Coordinate-wise min/max over the ``k`` best designs; the raw candidate
    values are kept for bootstrap sampling."""
    designs = [getattr(s, "design", s) for s in top]
    if len(designs) < k:
        raise ValueError(f"need at least {k} designs, got {len(designs)}")
    dims = {d.values.size for d in designs[:k]}
    if len(dims) != 1:
        raise ValueError("designs have mixed dimensions")
    candidates = np.vstack([d.values for d in designs[:k]])
    return SamplingWindows(low=candidates.min(axis=0), high=candidates.max(axis=0),
                           candidates=candidates)


def bootstrap_design(windows: SamplingWindows, constraints: ConstraintSet, rng=None,
                     uniform_in_window: bool = False,
                     max_attempts: int = 10_000) -> Design:
    """Draw each coordinate uniformly from its candidate values (or uniformly
    within its window when ``uniform_in_window``), then repair spacing
    violations by re-drawing only the offending coordinates."""
    rng = as_rng(rng)

    def draw(j):
        if uniform_in_window:
            return rng.uniform(windows.low[j], windows.high[j])
        return windows.candidates[rng.integers(windows.k), j]

    values = np.array([draw(j) for j in range(windows.dimension)])
    for _ in range(max_attempts):
        if constraints.strictly_increasing:
            values = np.sort(values)
        if _feasible_values(constraints, values):
            return Design(values)
        gaps = np.diff(values)
        if constraints.min_spacing > 0:
            bad = np.flatnonzero(gaps < constraints.min_spacing - 1e-12)
        else:
            bad = np.flatnonzero(gaps <= 0)
        if bad.size == 0:
            # Out of bounds, which candidate coordinates cannot fix.
            break
        for idx in bad:
            values[idx + 1] = draw(idx + 1)
    raise InfeasibleWindowsError("could not repair a feasible bootstrap design")


def window_efficiency(window_designs, optimum) -> float:
    """Mean utility of the window designs relative to the optimum's utility."""
    opt = optimum.utility.value if hasattr(optimum, "utility") else float(optimum)
    if opt <= 0:
        raise ValueError("efficiency undefined for non-positive optimum utility")
    utils = [s.utility.value if hasattr(s, "utility") else float(s) for s in window_designs]
    return float(np.mean(utils) / opt)
