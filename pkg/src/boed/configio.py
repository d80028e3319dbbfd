"""Run configuration, trace persistence and plot-data emission.

Configs are YAML with nested sections; every schedule is written as explicit
stage arrays so a run can be audited against its settings. All randomness
flows from the mandatory master seed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import presets
from .models import DeathModel, LogisticModel, PKModel
from .search import AcceptanceRule, RunTrace, Schedule
from .space import ConstraintSet, DesignSpace
from .utility import (ABCConfig, make_abcde_utility, make_sig_utility)


class ConfigError(ValueError):
    """Invalid run configuration; message lists the offending fields."""


@dataclass
class RunConfig:
    seed: int
    model: dict
    workers: int = 1
    out: str = "out"
    space: dict = field(default_factory=dict)
    estimator: dict = field(default_factory=dict)
    search: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    mcmc: dict = field(default_factory=dict)
    windows: dict = field(default_factory=dict)
    evaluate: dict = field(default_factory=dict)
    compare: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "seed", "workers", "out", "model", "space", "estimator", "search",
            "grid", "mcmc", "windows", "evaluate", "compare") if getattr(self, k)
            not in ({}, None)}


_SECTIONS = ("model", "space", "estimator", "search", "grid", "mcmc",
             "windows", "evaluate", "compare")


def parse_config(path_or_dict) -> RunConfig:
    if isinstance(path_or_dict, dict):
        raw = dict(path_or_dict)
    else:
        with open(path_or_dict) as fh:
            raw = yaml.safe_load(fh) or {}
    problems = []
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    if "seed" not in raw:
        problems.append("seed: required (wall-clock seeding is not allowed)")
    model = raw.get("model") or {}
    kind = model.get("kind")
    if kind not in ("death", "pk", "logistic"):
        problems.append(f"model.kind: must be death|pk|logistic, got {kind!r}")
    if kind in ("death", "logistic") and "n_obs" not in model:
        problems.append("model.n_obs: required for this model")
    search = raw.get("search") or {}
    for stage in search.get("stages", []):
        for key in ("iterations", "retain", "spawn", "scale"):
            if key not in stage:
                problems.append(f"search.stages: stage missing {key!r}")
        if stage.get("iterations", 1) < 1:
            problems.append("search.stages: iterations must be >= 1")
    if problems:
        raise ConfigError("invalid config: " + "; ".join(problems))
    known = {"seed", "workers", "out", *_SECTIONS}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"invalid config: unknown keys {sorted(unknown)}")
    return RunConfig(seed=int(raw["seed"]), workers=int(raw.get("workers", 1)),
                     out=str(raw.get("out", "out")), model=model,
                     **{s: raw.get(s) or {} for s in _SECTIONS if s != "model"})


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``a.b.c=value`` overrides to a raw config mapping."""
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value: {item!r}")
        dotted, text = item.split("=", 1)
        target = raw
        parts = dotted.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = yaml.safe_load(text)
    return raw


def build_model(cfg: RunConfig):
    m = cfg.model
    kind = m["kind"]
    if kind == "death":
        return DeathModel(population=int(m.get("population", 50)))
    if kind == "pk":
        return PKModel()
    return LogisticModel(int(m["n_obs"]))


def build_space(cfg: RunConfig) -> DesignSpace:
    m, s = cfg.model, cfg.space
    kind = m["kind"]
    if kind == "death":
        base = presets.death_space(int(m["n_obs"]))
    elif kind == "pk":
        base = presets.pk_space(int(m.get("n_obs", presets.PK_N_OBS)))
    else:
        base = presets.lr_space(int(m["n_obs"]))
    if not s:
        return base
    cons = base.constraints
    dim = cons.dimension
    return DesignSpace(ConstraintSet(
        np.full(dim, float(s.get("lower", cons.lower[0]))),
        np.full(dim, float(s.get("upper", cons.upper[0]))),
        min_spacing=float(s.get("min_spacing", cons.min_spacing)),
        strictly_increasing=bool(s.get("strictly_increasing", cons.strictly_increasing)),
    ))


def build_abc_config(cfg: RunConfig) -> ABCConfig:
    e = cfg.estimator
    n_obs = int(cfg.model.get("n_obs", 1))
    eps_default = presets.DEATH_EPSILON.get(n_obs, 0.5)
    death = cfg.model["kind"] == "death"
    defaults = presets.death_abc_config(n_obs) if death and n_obs in presets.DEATH_EPSILON \
        else ABCConfig()
    return ABCConfig(bank_size=int(e.get("bank_size", 50_000)),
                     epsilon=float(e.get("epsilon", eps_default)),
                     grid_cells=int(e.get("grid_cells", defaults.grid_cells)),
                     bias_correction=str(e.get("bias_correction", defaults.bias_correction)))


def build_utility(cfg: RunConfig, model):
    e = cfg.estimator
    kind = e.get("kind", "abcde" if cfg.model["kind"] == "death" else "sig")
    if kind == "abcde":
        return make_abcde_utility(model, build_abc_config(cfg), param_seed=cfg.seed)
    if kind == "sig":
        return make_sig_utility(model, int(e.get("b_outer", 5000)),
                                int(e.get("b_inner", 5000)))
    raise ConfigError(f"estimator.kind must be abcde|sig, got {kind!r}")


def build_schedule(cfg: RunConfig) -> Schedule:
    s = cfg.search
    if "stages" in s:
        stages = [(int(st["iterations"]), int(st["retain"]), int(st["spawn"]),
                   float(st["scale"])) for st in s["stages"]]
        return Schedule.from_stages(stages,
                                    initial_count=int(s.get("initial_count", 100)),
                                    boundary_prob=float(s.get("boundary_prob", 0.0)))
    kind = cfg.model["kind"]
    if kind == "death":
        return presets.death_schedule(int(cfg.model["n_obs"]))
    if kind == "pk":
        return presets.pk_schedule(desk=bool(s.get("desk", True)))
    return presets.lr_schedule(int(cfg.model["n_obs"]),
                               iters_per_stage=s.get("iters_per_stage"))


def build_rule(cfg: RunConfig) -> AcceptanceRule:
    s = cfg.search
    return AcceptanceRule(kind=s.get("acceptance", "top-r"),
                          threshold=s.get("threshold"))


def kernel_kind(cfg: RunConfig) -> str:
    return cfg.search.get("kernel",
                          "uniform" if cfg.model["kind"] == "logistic" else "gaussian")


# ---------------------------------------------------------------------------
# Trace persistence

TRACE_HEADER = ["generation", "design_id", "parent_id", "values", "utility",
                "b_outer", "b_inner", "seconds", "accepted", "ok"]
TRACE_VERSION = "boed-trace-v1"


@dataclass
class TraceRecord:
    generation: int
    design_id: str
    parent_id: str
    values: np.ndarray
    utility: float
    b_outer: int
    b_inner: int
    seconds: float
    accepted: bool
    ok: bool

    @classmethod
    def from_scored(cls, scored, accepted_ids):
        est = scored.utility
        return cls(generation=scored.generation, design_id=scored.design.id,
                   parent_id=scored.design.parent_id or "",
                   values=scored.design.values,
                   utility=est.value if est else float("nan"),
                   b_outer=est.b_outer if est else 0,
                   b_inner=est.b_inner if est else 0,
                   seconds=scored.seconds,
                   accepted=scored.design.id in accepted_ids, ok=scored.ok)


def _fmt_values(values) -> str:
    return ";".join(repr(float(v)) for v in values)


class TraceWriter:
    """Single-writer append-only CSV trace."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh)
        self._writer.writerow([TRACE_VERSION])
        self._writer.writerow(TRACE_HEADER)
        self._fh.flush()

    def write(self, record: TraceRecord):
        self._writer.writerow([
            record.generation, record.design_id, record.parent_id,
            _fmt_values(record.values), repr(float(record.utility)),
            record.b_outer, record.b_inner, repr(float(record.seconds)),
            int(record.accepted), int(record.ok),
        ])

    def flush(self):
        self._fh.flush()

    def close(self):
        self._fh.close()


def write_trace(path, records):
    writer = TraceWriter(path)
    for record in records:
        writer.write(record)
    writer.close()


def read_trace(path) -> list[TraceRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        version = next(reader)
        if version != [TRACE_VERSION]:
            raise ValueError(f"unsupported trace version {version!r}")
        header = next(reader)
        if header != TRACE_HEADER:
            raise ValueError("trace header mismatch")
        records = []
        for row in reader:
            values = np.array([float(v) for v in row[3].split(";")]) if row[3] else np.array([])
            records.append(TraceRecord(
                generation=int(row[0]), design_id=row[1], parent_id=row[2],
                values=values, utility=float(row[4]), b_outer=int(row[5]),
                b_inner=int(row[6]), seconds=float(row[7]),
                accepted=bool(int(row[8])), ok=bool(int(row[9]))))
        return records


def trace_records(trace: RunTrace):
    for generation, accepted in zip(trace.generations, trace.accepted_ids):
        accepted_set = set(accepted)
        for scored in generation:
            yield TraceRecord.from_scored(scored, accepted_set)


# ---------------------------------------------------------------------------
# Plot data

PLOT_KINDS = ("convergence-boxplot", "surface-heatmap", "windows-errorbar",
              "utility-comparison")


def emit_plot_data(kind: str, path, trace: RunTrace | None = None, surface=None,
                   windows=None, comparisons=None):
    """Write plain CSV tables that any plotting tool can render."""
    path = Path(path)
    if kind == "convergence-boxplot":
        if trace is None or not trace.generations:
            raise ValueError("convergence-boxplot needs a non-empty trace")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["generation", "min", "q1", "median", "q3", "max", "count"])
            for w, gen in enumerate(trace.generations):
                utils = np.array([s.value for s in gen if s.ok])
                q = np.percentile(utils, [0, 25, 50, 75, 100])
                writer.writerow([w, *[repr(float(v)) for v in q], utils.size])
    elif kind == "surface-heatmap":
        if not surface:
            raise ValueError("surface-heatmap needs scored grid designs")
        dim = surface[0].design.values.size
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"t{j + 1}" for j in range(dim)] + ["utility"])
            for s in surface:
                writer.writerow([repr(float(v)) for v in s.design.values]
                                + [repr(float(s.value))])
    elif kind == "windows-errorbar":
        if windows is None:
            raise ValueError("windows-errorbar needs sampling windows")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["coordinate", "low", "high"]
                            + [f"candidate_{i + 1}" for i in range(windows.k)])
            for j in range(windows.dimension):
                writer.writerow([j + 1, repr(float(windows.low[j])),
                                 repr(float(windows.high[j]))]
                                + [repr(float(v)) for v in windows.candidates[:, j]])
    elif kind == "utility-comparison":
        if not comparisons:
            raise ValueError("utility-comparison needs named utility lists")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["name", "replicate", "utility"])
            for name, utils in comparisons.items():
                for i, u in enumerate(utils):
                    writer.writerow([name, i, repr(float(u))])
    else:
        raise ValueError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")


def write_result(path, payload: dict):
    def default(obj):
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, (np.floating, np.integer)):
            return obj.item()
        raise TypeError(f"cannot serialise {type(obj)}")

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=default)
        fh.write("\n")
