"""Design vectors, feasible regions, initial sampling and perturbation kernels."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

GRID_CAP = 10_000_000
PERTURB_ATTEMPTS = 10_000


class DimensionMismatchError(ValueError):
    pass


class InfeasibleSpaceError(ValueError):
    pass


class PerturbationError(RuntimeError):
    def __init__(self, attempts):
        super().__init__(f"no feasible perturbation found in {attempts} attempts")
        self.attempts = attempts


class GridSizeError(ValueError):
    pass


@dataclass(frozen=True)
class ConstraintSet:
    """Per-coordinate bounds plus optional ordering/spacing constraints.

    ``min_spacing > 0`` requires consecutive coordinates to differ by at least
    that much, which only makes sense for strictly increasing designs.
    """

    lower: np.ndarray
    upper: np.ndarray
    min_spacing: float = 0.0
    strictly_increasing: bool = False

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape:
            raise DimensionMismatchError("lower/upper bound vectors differ in length")
        if np.any(lower > upper):
            raise ValueError("lower bound exceeds upper bound")
        if self.min_spacing < 0:
            raise ValueError("min_spacing must be >= 0")
        if self.min_spacing > 0 and not self.strictly_increasing:
            raise ValueError("min_spacing > 0 requires strictly_increasing")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dimension(self) -> int:
        return self.lower.size

    @classmethod
    def box(cls, lower, upper, dimension, min_spacing=0.0, strictly_increasing=False):
        """Same scalar bounds in every coordinate."""
        return cls(
            np.full(dimension, float(lower)),
            np.full(dimension, float(upper)),
            min_spacing=min_spacing,
            strictly_increasing=strictly_increasing,
        )


@dataclass(frozen=True)
class DesignSpace:
    constraints: ConstraintSet

    @property
    def dimension(self) -> int:
        return self.constraints.dimension


@dataclass
class Design:
    """A single point in the design space."""

    values: np.ndarray
    id: str = ""
    generation: int = 0
    parent_id: str | None = None

    def __post_init__(self):
        self.values = np.atleast_1d(np.asarray(self.values, dtype=float))


@dataclass(frozen=True)
class PerturbationKernel:
    """Noise distribution centred on a parent design.

    ``gaussian`` scale is a per-coordinate standard deviation; ``uniform``
    scale is a per-coordinate half-width.
    """

    kind: str
    scale: np.ndarray
    truncation: str = "reject"

    def __post_init__(self):
        if self.kind not in ("gaussian", "uniform"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.truncation not in ("reject", "clamp"):
            raise ValueError(f"unknown truncation mode {self.truncation!r}")
        scale = np.atleast_1d(np.asarray(self.scale, dtype=float))
        if np.any(scale <= 0):
            raise ValueError("kernel scales must be strictly positive")
        object.__setattr__(self, "scale", scale)

    def with_scale(self, scale) -> "PerturbationKernel":
        return PerturbationKernel(self.kind, scale, self.truncation)


def _feasible_values(constraints: ConstraintSet, values: np.ndarray, tol=1e-12) -> bool:
    if np.any(values < constraints.lower - tol) or np.any(values > constraints.upper + tol):
        return False
    if values.size > 1 and constraints.strictly_increasing:
        gaps = np.diff(values)
        if np.any(gaps <= 0):
            return False
        if constraints.min_spacing > 0 and np.any(gaps < constraints.min_spacing - tol):
            return False
    return True


def satisfies(space: DesignSpace, design: Design) -> bool:
    """True iff the design satisfies bounds, ordering and spacing constraints."""
    if design.values.size != space.dimension:
        raise DimensionMismatchError(
            f"design has {design.values.size} coordinates, space expects {space.dimension}"
        )
    return _feasible_values(space.constraints, design.values)


def _check_feasible(constraints: ConstraintSet):
    span = constraints.upper[-1] - constraints.lower[0]
    if constraints.strictly_increasing and constraints.min_spacing > 0:
        if (constraints.dimension - 1) * constraints.min_spacing > span + 1e-12:
            raise InfeasibleSpaceError(
                "spacing constraint cannot be satisfied within the bounds"
            )


def _uniform_feasible(constraints: ConstraintSet, rng: np.random.Generator) -> np.ndarray:
    n = constraints.dimension
    if not constraints.strictly_increasing:
        return rng.uniform(constraints.lower, constraints.upper)
    gap = constraints.min_spacing
    # Draw in the shrunken box, sort, then fan out by the minimum gap: uniform
    # over the order-constrained region.
    lo = constraints.lower[0]
    hi = constraints.upper[-1]
    width = hi - lo - (n - 1) * gap
    raw = np.sort(rng.uniform(0.0, width, size=n))
    values = lo + raw + gap * np.arange(n)
    if not _feasible_values(constraints, values):
        # Non-uniform per-coordinate bounds, or sort ties; fall back to rejection.
        for _ in range(PERTURB_ATTEMPTS):
            values = np.sort(rng.uniform(constraints.lower, constraints.upper))
            if _feasible_values(constraints, values):
                break
        else:
            raise InfeasibleSpaceError("could not draw a feasible design")
    return values


def sample_initial(
    space: DesignSpace,
    count: int,
    boundary_prob: float = 0.0,
    rng: np.random.Generator | None = None,
) -> list[Design]:
    """Draw the initial population: uniform over the feasible region, mixed
    with all-boundary designs (each coordinate snapped to a random bound) with
    probability ``boundary_prob``. Boundary draws that violate spacing
    constraints are replaced by uniform draws so the count is always honoured.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not 0.0 <= boundary_prob <= 1.0:
        raise ValueError("boundary_prob must be in [0, 1]")
    rng = np.random.default_rng(rng)
    cons = space.constraints
    _check_feasible(cons)
    designs = []
    for i in range(count):
        values = None
        if boundary_prob > 0 and rng.random() < boundary_prob:
            picks = rng.random(cons.dimension) < 0.5
            candidate = np.where(picks, cons.lower, cons.upper)
            if _feasible_values(cons, candidate):
                values = candidate
        if values is None:
            values = _uniform_feasible(cons, rng)
        designs.append(Design(values, id=f"init-{i}", generation=0))
    return designs


def perturb(
    design: Design,
    kernel: PerturbationKernel,
    constraints: ConstraintSet,
    rng: np.random.Generator,
    max_attempts: int = PERTURB_ATTEMPTS,
) -> Design:
    """Sample one offspring from the kernel centred at ``design``, truncated to
    the feasible region by whole-vector rejection. Time designs are re-sorted
    before the feasibility check (the coordinates are an unordered set of
    sampling times).
    """
    centre = design.values
    if kernel.scale.size not in (1, centre.size):
        raise DimensionMismatchError("kernel scale length does not match design")
    if kernel.truncation == "clamp":
        # Project out-of-box proposals onto the bounds instead of resampling.
        # This piles probability mass exactly on the boundary, which keeps
        # boundary-optimal factor designs from drifting inward; ordering
        # constraints are restored by sorting where applicable.
        if kernel.kind == "gaussian":
            values = centre + kernel.scale * rng.standard_normal(centre.size)
        else:
            values = centre + kernel.scale * rng.uniform(-1.0, 1.0, size=centre.size)
        values = np.clip(values, constraints.lower, constraints.upper)
        if constraints.strictly_increasing:
            values = np.sort(values)
        if _feasible_values(constraints, values):
            return Design(values, generation=design.generation + 1, parent_id=design.id)
        # Spacing ties introduced by clipping: fall through to rejection.
    independent = constraints.min_spacing == 0.0 and not constraints.strictly_increasing
    if independent:
        # Coordinates are only box-constrained, so whole-vector rejection
        # factorises exactly into per-coordinate rejection. Resampling only the
        # offending coordinates keeps the same truncated distribution while
        # staying feasible even when every coordinate sits on a boundary.
        values = centre.copy()
        todo = np.ones(centre.size, dtype=bool)
        for _ in range(max_attempts):
            scale = kernel.scale if kernel.scale.size == 1 else kernel.scale[todo]
            if kernel.kind == "gaussian":
                values[todo] = centre[todo] + scale * rng.standard_normal(int(todo.sum()))
            else:
                values[todo] = centre[todo] + scale * rng.uniform(-1.0, 1.0, size=int(todo.sum()))
            todo = (values < constraints.lower) | (values > constraints.upper)
            if not todo.any():
                return Design(values, generation=design.generation + 1, parent_id=design.id)
        raise PerturbationError(max_attempts)
    for _ in range(max_attempts):
        if kernel.kind == "gaussian":
            values = centre + kernel.scale * rng.standard_normal(centre.size)
        else:
            values = centre + kernel.scale * rng.uniform(-1.0, 1.0, size=centre.size)
        if constraints.strictly_increasing:
            values = np.sort(values)
        if _feasible_values(constraints, values):
            return Design(values, generation=design.generation + 1, parent_id=design.id)
    raise PerturbationError(max_attempts)


def enumerate_grid(space: DesignSpace, spacing: float, cap: int = GRID_CAP) -> list[Design]:
    """All feasible lattice points with coordinates at ``lower + k * spacing``."""
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    cons = space.constraints
    tol = 1e-9
    axes = []
    for j in range(cons.dimension):
        k_max = int(np.floor((cons.upper[j] - cons.lower[j]) / spacing + tol))
        axes.append(cons.lower[j] + spacing * np.arange(k_max + 1))

    designs = []
    for combo in itertools.product(*axes):
        values = np.asarray(combo)
        if _feasible_values(cons, values):
            designs.append(Design(values, id=f"grid-{len(designs)}"))
            if len(designs) > cap:
                raise GridSizeError(f"grid exceeds cap of {cap} points")
    return designs
