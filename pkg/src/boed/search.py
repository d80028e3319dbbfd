"""Population-based stochastic search over the design space.

Each generation: score every current design, keep the best ``r_w`` (ties at
the cut rank are all kept, and the best design found so far is re-injected if
it fell out), then sample ``m_w`` offspring around each survivor from the
perturbation kernel. Per-design RNG streams are derived from
(master seed, generation, ordinal) so results do not depend on evaluation
order or worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .space import Design, DesignSpace, PerturbationKernel, perturb, sample_initial
from .utility import UtilityEstimate


class EmptyGenerationError(RuntimeError):
    pass


@dataclass
class Schedule:
    """Per-generation control sequences for the search."""

    retain: np.ndarray  # r_w, length W
    spawn: np.ndarray  # m_w, length W
    scale: np.ndarray  # kernel scale per generation, length W (scalar per gen)
    initial_count: int
    boundary_prob: float = 0.0

    def __post_init__(self):
        self.retain = np.asarray(self.retain, dtype=int)
        self.spawn = np.asarray(self.spawn, dtype=int)
        self.scale = np.asarray(self.scale, dtype=float)
        if not (len(self.retain) == len(self.spawn) == len(self.scale)):
            raise ValueError("retain, spawn and scale sequences must share a length")
        if len(self.retain) == 0:
            raise ValueError("schedule must cover at least one generation")
        if np.any(self.retain < 1) or np.any(self.spawn < 1) or np.any(self.scale <= 0):
            raise ValueError("schedule entries must be positive")
        if self.initial_count < 1:
            raise ValueError("initial_count must be >= 1")

    @property
    def generations(self) -> int:
        return len(self.retain)

    @classmethod
    def from_stages(cls, stages, initial_count, boundary_prob=0.0):
        """Build from (iterations, retain, spawn, scale) stage tuples."""
        retain, spawn, scale = [], [], []
        for reps, r, m, s in stages:
            retain += [r] * reps
            spawn += [m] * reps
            scale += [s] * reps
        return cls(np.array(retain), np.array(spawn), np.array(scale),
                   initial_count=initial_count, boundary_prob=boundary_prob)


@dataclass(frozen=True)
class AcceptanceRule:
    """How survivors are picked each generation.

    kinds: ``top-r`` (elite of the current generation),
    ``top-r-with-previous`` (elite of current plus previous survivors,
    a fail-safe for high-dimensional spaces), ``threshold`` (keep designs
    whose utility is at least ``threshold`` times the current best).
    """

    kind: str = "top-r"
    threshold: float | None = None

    def __post_init__(self):
        if self.kind not in ("top-r", "top-r-with-previous", "threshold"):
            raise ValueError(f"unknown acceptance rule {self.kind!r}")
        if (self.kind == "threshold") != (self.threshold is not None):
            raise ValueError("threshold must be given exactly for the threshold rule")
        if self.threshold is not None and not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must lie in (0, 1]")


@dataclass
class ScoredDesign:
    design: Design
    utility: UtilityEstimate | None
    generation: int
    ok: bool = True
    error: str | None = None
    seconds: float = 0.0

    @property
    def value(self) -> float:
        return self.utility.value if self.utility is not None else -np.inf


@dataclass
class RunTrace:
    generations: list = field(default_factory=list)  # list[list[ScoredDesign]]
    accepted_ids: list = field(default_factory=list)
    best_per_gen: list = field(default_factory=list)
    gen_seconds: list = field(default_factory=list)

    def all_scored(self):
        return [s for gen in self.generations for s in gen]


def accept(scored, previous_accepted, rule: AcceptanceRule, r: int, best_so_far):
    """Survivor selection with tie inclusion at the cut rank and re-injection
    of the best design found so far."""
    if r < 1:
        raise ValueError("r must be >= 1")
    pool = [s for s in scored if s.ok]
    if rule.kind == "top-r-with-previous":
        seen = {s.design.id for s in pool}
        pool += [s for s in previous_accepted if s.design.id not in seen]
    if not pool:
        raise EmptyGenerationError("no successfully scored designs to accept")

    ranked = sorted(pool, key=lambda s: s.value, reverse=True)
    if rule.kind == "threshold":
        cut = rule.threshold * ranked[0].value
        kept = [s for s in ranked if s.value >= cut]
    else:
        kept = ranked[:r]
        cut_value = ranked[min(r, len(ranked)) - 1].value
        kept += [s for s in ranked[r:] if s.value == cut_value]

    if best_so_far is not None and best_so_far.design.id not in {s.design.id for s in kept}:
        kept.append(best_so_far)
    return kept


def spawn(accepted, m: int, kernel: PerturbationKernel, constraints, rng,
          generation: int | None = None):
    """Sample ``m`` offspring around each accepted design independently;
    parents are never combined."""
    if m < 1:
        raise ValueError("m must be >= 1")
    offspring = []
    for parent in accepted:
        design = parent.design if isinstance(parent, ScoredDesign) else parent
        for _ in range(m):
            child = perturb(design, kernel, constraints, rng)
            if generation is not None:
                child.generation = generation
            child.id = f"g{child.generation}-{len(offspring)}"
            offspring.append(child)
    return offspring


def _derived_seed(master_seed, generation, ordinal):
    ss = np.random.SeedSequence(master_seed, spawn_key=(generation, ordinal))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _evaluate_generation(designs, utility_fn, master_seed, generation, workers):
    def score(args):
        ordinal, design = args
        seed = _derived_seed(master_seed, generation, ordinal)
        t0 = time.perf_counter()
        try:
            est = utility_fn(design, seed)
            return ScoredDesign(design, est, generation,
                                seconds=time.perf_counter() - t0)
        except Exception as exc:  # noqa: BLE001 - failures flagged, not fatal
            return ScoredDesign(design, None, generation, ok=False, error=str(exc),
                                seconds=time.perf_counter() - t0)

    items = list(enumerate(designs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(score, items))
    return [score(item) for item in items]


def run_insh(space: DesignSpace, utility_fn, schedule: Schedule,
             rule: AcceptanceRule | None = None, kernel_kind: str = "gaussian",
             kernel_truncation: str = "reject",
             seed: int = 0, workers: int = 1, trace_sink=None):
    """Run the full evolutionary search; returns (best ScoredDesign, RunTrace).

    ``utility_fn(design, seed) -> UtilityEstimate`` must be deterministic
    given its seed. ``trace_sink``, if given, is called with each generation's
    list of ScoredDesign as soon as it is scored.
    """
    rule = rule or AcceptanceRule()
    master = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xD5,)))
    designs = sample_initial(space, schedule.initial_count,
                             boundary_prob=schedule.boundary_prob, rng=master)
    trace = RunTrace()
    best = None
    previous_accepted = []

    for w in range(schedule.generations):
        t0 = time.perf_counter()
        scored = _evaluate_generation(designs, utility_fn, seed, w, workers)
        if not any(s.ok for s in scored):
            raise EmptyGenerationError(f"every design failed in generation {w}")
        gen_best = max((s for s in scored if s.ok), key=lambda s: s.value)
        if best is None or gen_best.value > best.value:
            best = gen_best

        accepted = accept(scored, previous_accepted, rule, int(schedule.retain[w]), best)
        previous_accepted = accepted

        trace.generations.append(scored)
        trace.accepted_ids.append([s.design.id for s in accepted])
        trace.best_per_gen.append(best)
        trace.gen_seconds.append(time.perf_counter() - t0)
        if trace_sink is not None:
            trace_sink(w, scored)

        if w + 1 < schedule.generations:
            kernel = PerturbationKernel(kernel_kind,
                                        np.full(space.dimension, schedule.scale[w]),
                                        kernel_truncation)
            designs = spawn(accepted, int(schedule.spawn[w]), kernel,
                            space.constraints, master, generation=w + 1)

    return best, trace
