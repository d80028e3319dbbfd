"""Canonical benchmark problem setups: spaces, schedules and estimator
settings for the death, pharmacokinetic and logistic-regression examples.

Schedules follow the published tuning tables for each problem; ``desk``
variants cut the generation count so a run finishes on a laptop.
"""

from __future__ import annotations

import numpy as np

from .models import DeathModel, LogisticModel, PKModel
from .search import Schedule
from .space import ConstraintSet, DesignSpace
from .utility import ABCConfig

# (generations, (m values), (r values), initial designs); each m/r value runs
# for half the generations. Tolerances are per number of observation times.
DEATH_RUNS = {
    1: (8, (3, 5), (10, 6), 20),
    2: (10, (3, 5), (20, 12), 50),
    3: (16, (3, 5), (20, 12), 120),
    4: (20, (3, 5), (20, 12), 250),
    6: (30, (3, 5), (25, 15), 400),
    8: (50, (3, 5), (25, 15), 600),
}
DEATH_EPSILON = {1: 0.25, 2: 0.50, 3: 0.75, 4: 1.00, 6: 1.50, 8: 1.50}
DEATH_KERNEL_SD = 0.1

PK_KERNEL_SD = 0.2
PK_N_OBS = 15

LR_RETAIN = (200, 100, 50, 25, 15, 10)
LR_SPAWN = {6: (3, 6, 12, 24, 40, 60), 10: (3, 6, 12, 24, 40, 60),
            24: (3, 6, 12, 24, 40, 60), 48: (6, 12, 24, 48, 80, 120)}
LR_SCALE = {6: (0.20, 0.10, 0.05, 0.025, 0.01, 0.005),
            10: (0.20, 0.10, 0.05, 0.025, 0.01, 0.005),
            24: (0.20, 0.10, 0.05, 0.025, 0.01, 0.005),
            48: (0.20, 0.10, 0.05, 0.025, 0.01, 0.0025)}
LR_STAGE_ITERS = {6: 20, 10: 22, 24: 40, 48: 60}

# Best published observation schedule for the PK problem (15 times in hours).
PK_REFERENCE_DESIGN = np.array([
    0.1961, 0.4840, 0.7506, 1.176, 4.069, 4.780, 5.281,
    6.030, 6.377, 18.22, 18.85, 19.72, 20.33, 21.52, 22.04,
])
PK_REFERENCE_UTILITY = 4.5052  # mean of 20 evaluations at B = B~ = 20,000

# Reference utilities for the logistic problem by number of rows.
LR_REFERENCE_UTILITY = {6: 1.99, 10: 2.66, 24: 3.88, 48: 5.01}


def death_space(n_obs: int, lower: float = 0.05, upper: float = 10.0) -> DesignSpace:
    return DesignSpace(ConstraintSet.box(lower, upper, n_obs, strictly_increasing=True))


def death_model(population: int = 50) -> DeathModel:
    return DeathModel(population=population)


def death_schedule(n_obs: int) -> Schedule:
    w, m_vals, r_vals, initial = DEATH_RUNS[n_obs]
    half = w // 2
    stages = [(half, r_vals[0], m_vals[0], DEATH_KERNEL_SD),
              (w - half, r_vals[1], m_vals[1], DEATH_KERNEL_SD)]
    return Schedule.from_stages(stages, initial_count=initial)


def death_abc_config(n_obs: int, bank_size: int = 50_000) -> ABCConfig:
    # 20 histogram cells rather than the generic 100: with a 50k bank the
    # per-unique-dataset acceptance counts are a few hundred, and a finer grid
    # inflates the histogram-KL bias enough to reorder the flat utility ridge.
    # The Grassberger entropy correction removes most of the remainder.
    return ABCConfig(bank_size=bank_size, epsilon=DEATH_EPSILON[n_obs],
                     grid_cells=20, bias_correction="grassberger")


def pk_space(n_obs: int = PK_N_OBS) -> DesignSpace:
    return DesignSpace(ConstraintSet.box(0.0, 24.0, n_obs, min_spacing=0.25,
                                         strictly_increasing=True))


def pk_model() -> PKModel:
    return PKModel()


def pk_schedule(desk: bool = False) -> Schedule:
    # Five (retain, spawn) rungs holding the per-generation budget at 300.
    rungs = [(150, 2), (75, 4), (50, 6), (25, 12), (10, 30)]
    iters = 3 if desk else 12
    stages = [(iters, r, m, PK_KERNEL_SD) for r, m in rungs]
    return Schedule.from_stages(stages, initial_count=1200)


def lr_space(n_rows: int) -> DesignSpace:
    return DesignSpace(ConstraintSet.box(-1.0, 1.0, 4 * n_rows))


def lr_model(n_rows: int) -> LogisticModel:
    return LogisticModel(n_rows)


def lr_schedule(n_rows: int, iters_per_stage: int | None = None,
                initial_count: int = 10_000) -> Schedule:
    iters = iters_per_stage or LR_STAGE_ITERS[n_rows]
    stages = [(iters, r, m, s) for r, m, s in
              zip(LR_RETAIN, LR_SPAWN[n_rows], LR_SCALE[n_rows])]
    return Schedule.from_stages(stages, initial_count=initial_count, boundary_prob=0.5)
