"""Command-line entry point.

Subcommands: ``insh`` (full evolutionary run), ``grid`` (exhaustive surface),
``mcmc`` (utility-targeting chain), ``windows`` (sampling windows from a
trace), ``evaluate`` (re-score given designs), ``compare`` (side-by-side
utility box-plot data). Exit codes: 0 success, 2 config error, 3 runtime
failure.
"""

from __future__ import annotations

import argparse
import sys
import zlib
from pathlib import Path

import numpy as np
import yaml

from . import configio, presets
from .baselines import MullerConfig, TruncatedGaussianProposal, chain_mode, run_muller
from .configio import ConfigError, RunConfig, emit_plot_data, write_result
from .search import run_insh
from .space import Design
from .utility import make_abc_utility_sampler, sig_nested_mc
from .windows import bootstrap_design, build_windows, window_efficiency


def _load_config(args) -> RunConfig:
    with open(args.config) as fh:
        raw = yaml.safe_load(fh) or {}
    configio.apply_overrides(raw, args.override)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.workers is not None:
        raw["workers"] = args.workers
    if args.out is not None:
        raw["out"] = args.out
    return configio.parse_config(raw)


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _rescore_fn(cfg: RunConfig, model):
    e = cfg.evaluate
    b_outer = int(e.get("b_outer", 20_000))
    b_inner = int(e.get("b_inner", 20_000))
    repeats = int(e.get("repeats", 20))

    def rescore(values, tag):
        key = zlib.crc32(str(tag).encode())
        return [sig_nested_mc(model, values, b_outer, b_inner,
                              seed=int(np.random.SeedSequence(
                                  cfg.seed, spawn_key=(key, r)
                              ).generate_state(1)[0])).value
                for r in range(repeats)]

    return rescore, b_outer, b_inner, repeats


def cmd_insh(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    model = configio.build_model(cfg)
    space = configio.build_space(cfg)
    utility_fn = configio.build_utility(cfg, model)
    schedule = configio.build_schedule(cfg)
    rule = configio.build_rule(cfg)

    writer = configio.TraceWriter(out / "trace.csv")

    def sink(w, scored):
        accepted = set()  # accepted ids are known one step late; rewritten at the end
        for s in scored:
            writer.write(configio.TraceRecord.from_scored(s, accepted))
        writer.flush()

    best, trace = run_insh(space, utility_fn, schedule, rule,
                           kernel_kind=configio.kernel_kind(cfg),
                           seed=cfg.seed, workers=cfg.workers, trace_sink=sink)
    writer.close()
    configio.write_trace(out / "trace.csv", configio.trace_records(trace))
    emit_plot_data("convergence-boxplot", out / "convergence.csv", trace=trace)
    evaluations = sum(len(g) for g in trace.generations)
    write_result(out / "result.json", {
        "command": "insh",
        "config": cfg.to_dict(),
        "best": {"values": best.design.values, "utility": best.utility.value,
                 "generation": best.generation, "id": best.design.id},
        "evaluations": evaluations,
        "generations": len(trace.generations),
    })
    print(f"best design {np.round(best.design.values, 4).tolist()} "
          f"utility {best.utility.value:.4f} ({evaluations} evaluations)")
    return 0


def cmd_grid(cfg: RunConfig) -> int:
    from .baselines import run_grid_search

    out = _outdir(cfg)
    model = configio.build_model(cfg)
    space = configio.build_space(cfg)
    utility_fn = configio.build_utility(cfg, model)
    spacing = float(cfg.grid.get("spacing", 0.1))
    best, surface = run_grid_search(space, spacing, utility_fn, seed=cfg.seed)
    emit_plot_data("surface-heatmap", out / "surface.csv", surface=surface)
    write_result(out / "result.json", {
        "command": "grid", "config": cfg.to_dict(), "spacing": spacing,
        "best": {"values": best.design.values, "utility": best.utility.value},
        "evaluations": len(surface),
    })
    print(f"grid optimum {np.round(best.design.values, 4).tolist()} "
          f"utility {best.utility.value:.4f} over {len(surface)} designs")
    return 0


def cmd_mcmc(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    model = configio.build_model(cfg)
    space = configio.build_space(cfg)
    abc = configio.build_abc_config(cfg)
    sampler = make_abc_utility_sampler(model, abc, param_seed=cfg.seed)
    m = cfg.mcmc
    proposal = TruncatedGaussianProposal(
        scale=np.full(space.dimension, float(m.get("proposal_scale", 0.5))),
        lower=space.constraints.lower, upper=space.constraints.upper,
        sort=space.constraints.strictly_increasing)
    config = MullerConfig(chain_length=int(m.get("chain_length", 10_000)),
                          proposal=proposal, burn_in=int(m.get("burn_in", 1_000)))
    chain = run_muller(space, sampler, config, seed=cfg.seed)
    np.savetxt(out / "chain.csv", chain, delimiter=",",
               header=",".join(f"t{j + 1}" for j in range(space.dimension)), comments="")
    mode = chain_mode(chain)
    write_result(out / "result.json", {
        "command": "mcmc", "config": cfg.to_dict(),
        "mode": mode, "chain_length": int(config.chain_length),
        "burn_in": int(config.burn_in),
    })
    print(f"chain mode {np.round(mode, 4).tolist()}")
    return 0


def cmd_windows(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    model = configio.build_model(cfg)
    space = configio.build_space(cfg)
    w = cfg.windows
    trace_path = w.get("trace", str(Path(cfg.out) / "trace.csv"))
    records = [r for r in configio.read_trace(trace_path) if r.ok]
    records.sort(key=lambda r: r.utility, reverse=True)
    top_k = int(w.get("top_k", 20))
    n_boot = int(w.get("n_bootstrap", 20))
    windows = build_windows([Design(r.values, id=r.design_id) for r in records], top_k)
    emit_plot_data("windows-errorbar", out / "windows.csv", windows=windows)

    rescore, b_outer, b_inner, _ = _rescore_fn(cfg, model)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0xB0,)))
    boots = [bootstrap_design(windows, space.constraints, rng) for _ in range(n_boot)]
    boot_utils = [float(np.mean(rescore(d.values, f"boot{i}"))) for i, d in enumerate(boots)]
    opt_util = float(np.mean(rescore(records[0].values, "optimum")))
    efficiency = window_efficiency(boot_utils, opt_util)
    write_result(out / "result.json", {
        "command": "windows", "config": cfg.to_dict(),
        "windows": {"low": windows.low, "high": windows.high},
        "bootstrap_designs": [d.values for d in boots],
        "bootstrap_utilities": boot_utils,
        "optimum_utility": opt_util,
        "efficiency": efficiency,
        "b_outer": b_outer, "b_inner": b_inner,
    })
    print(f"sampling-window efficiency {efficiency:.4f} over {n_boot} bootstrap designs")
    return 0


def _named_designs(cfg: RunConfig, section: dict):
    designs = section.get("designs", {})
    if isinstance(designs, list):
        designs = {f"design_{i + 1}": d for i, d in enumerate(designs)}
    out = {}
    for name, values in designs.items():
        if values == "pk-reference":
            values = presets.PK_REFERENCE_DESIGN
        out[name] = np.asarray(values, dtype=float)
    return out


def cmd_evaluate(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    model = configio.build_model(cfg)
    rescore, b_outer, b_inner, repeats = _rescore_fn(cfg, model)
    named = _named_designs(cfg, cfg.evaluate)
    if not named:
        raise ConfigError("evaluate.designs is empty")
    results = {name: rescore(values, name) for name, values in named.items()}
    emit_plot_data("utility-comparison", out / "evaluations.csv", comparisons=results)
    write_result(out / "result.json", {
        "command": "evaluate", "config": cfg.to_dict(),
        "b_outer": b_outer, "b_inner": b_inner, "repeats": repeats,
        "summary": {name: {"mean": float(np.mean(u)), "median": float(np.median(u)),
                           "min": float(np.min(u)), "max": float(np.max(u))}
                    for name, u in results.items()},
    })
    for name, u in results.items():
        print(f"{name}: mean {np.mean(u):.4f} median {np.median(u):.4f} ({repeats} reps)")
    return 0


def cmd_compare(cfg: RunConfig) -> int:
    out = _outdir(cfg)
    model = configio.build_model(cfg)
    cfg.evaluate = {**cfg.compare, **{k: v for k, v in cfg.evaluate.items()}}
    rescore, b_outer, b_inner, repeats = _rescore_fn(cfg, model)
    named = _named_designs(cfg, cfg.compare)
    if not named:
        raise ConfigError("compare.designs is empty")
    results = {name: rescore(values, name) for name, values in named.items()}
    emit_plot_data("utility-comparison", out / "comparison.csv", comparisons=results)
    write_result(out / "result.json", {
        "command": "compare", "config": cfg.to_dict(),
        "b_outer": b_outer, "b_inner": b_inner, "repeats": repeats,
        "summary": {name: float(np.mean(u)) for name, u in results.items()},
    })
    for name, u in results.items():
        print(f"{name}: mean {np.mean(u):.4f}")
    return 0


COMMANDS = {"insh": cmd_insh, "grid": cmd_grid, "mcmc": cmd_mcmc,
            "windows": cmd_windows, "evaluate": cmd_evaluate, "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boed",
                                     description="Bayesian optimal design search")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--override", action="append", default=[],
                       help="dotted config override, e.g. estimator.b_outer=2000")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
    except (ConfigError, FileNotFoundError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
