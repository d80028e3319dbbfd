"""End-to-end acceptance suite.

One test per acceptance criterion; each prints a single PASS/FAIL line with
the measured numbers before asserting, so the whole scorecard is visible in
one ``pytest -v`` run even when an assertion trips.

Criteria 1 and 2 are expected to fail: the exact-likelihood expected-utility
surfaces for the death process put the true optima at t* = 1.589 (one
observation) and (1.013, 2.617) (two observations), at the edge of / outside
the published target boxes, and the surfaces are flat to a few 1e-4 around
them. The notes shipped alongside the project analyse this in detail; the
tests report the honest numbers rather than loosening the estimator.
"""

import numpy as np
import pytest
from scipy import stats

from boed.baselines import MullerConfig, TruncatedGaussianProposal, run_grid_search, run_muller
from boed.models import NormalNormalModel
from boed.presets import (LR_REFERENCE_UTILITY, PK_REFERENCE_DESIGN,
                          death_abc_config, death_model, death_schedule,
                          death_space, lr_model, lr_schedule, lr_space,
                          pk_model, pk_schedule, pk_space)
from boed.search import AcceptanceRule, run_insh
from boed.space import satisfies
from boed.utility import make_abcde_utility, make_sig_utility, sig_nested_mc
from boed.windows import bootstrap_design, build_windows, window_efficiency


SCORECARD: list[str] = []


def report(criterion: int, ok: bool, detail: str) -> bool:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} — {detail}"
    print(line)
    # Collected by the terminal-summary hook in conftest.py so the scorecard
    # shows up in a plain ``pytest -v`` run, not only for failing tests.
    SCORECARD.append(line)
    return ok


def top_unique(trace, k):
    ranked = sorted((s for s in trace.all_scored() if s.ok),
                    key=lambda s: s.value, reverse=True)
    seen, out = set(), []
    for s in ranked:
        key = s.design.values.tobytes()
        if key not in seen:
            seen.add(key)
            out.append(s)
        if len(out) == k:
            break
    return out


# ---------------------------------------------------------------------------
# Shared heavy artefacts

@pytest.fixture(scope="module")
def death1():
    model = death_model()
    ufn = make_abcde_utility(model, death_abc_config(1), param_seed=0)
    return model, death_space(1), ufn


@pytest.fixture(scope="module")
def death2():
    model = death_model()
    ufn = make_abcde_utility(model, death_abc_config(2), param_seed=0)
    return model, death_space(2), ufn


@pytest.fixture(scope="module")
def death1_runs(death1):
    _, space, ufn = death1
    return [run_insh(space, ufn, death_schedule(1), seed=seed, workers=4)
            for seed in range(10)]


@pytest.fixture(scope="module")
def death2_runs(death2):
    _, space, ufn = death2
    return [run_insh(space, ufn, death_schedule(2), seed=seed, workers=4)
            for seed in range(10)]


@pytest.fixture(scope="module")
def death2_grid(death2):
    _, space, ufn = death2
    return run_grid_search(space, 0.1, ufn)


@pytest.fixture(scope="module")
def pk_run():
    model = pk_model()
    space = pk_space()
    ufn = make_sig_utility(model, 500, 500)
    best, trace = run_insh(space, ufn, pk_schedule(desk=True), seed=0,
                           workers=4)
    # Selection at the in-run precision favours noise-inflated winners;
    # re-score the leaders at high precision and keep the best.
    top = top_unique(trace, 20)
    rescored = [(sig_nested_mc(model, s.design.values, 5000, 5000,
                               seed=777).value, s) for s in top]
    rescored.sort(key=lambda t: t[0], reverse=True)
    return model, space, best, trace, rescored


# ---------------------------------------------------------------------------
# Criteria

def test_criterion_1_death_one_observation(death1_runs):
    times = [best.design.values[0] for best, _ in death1_runs]
    hits = sum(1.35 <= t <= 1.60 for t in times)
    ok = hits >= 8
    detail = (f"{hits}/10 seeds in [1.35, 1.60]; optimal times "
              f"{np.round(sorted(times), 3).tolist()} "
              "(exact-likelihood optimum t* = 1.589 sits at the box edge)")
    assert report(1, ok, detail)


def test_criterion_2_death_two_observations(death2_runs, death2_grid):
    target = np.array([0.95, 2.80])
    designs = [best.design.values for best, _ in death2_runs]
    hits = sum(np.all(np.abs(d - target) <= 0.15) for d in designs)
    grid_best, _ = death2_grid
    grid_ok = np.all(np.abs(grid_best.design.values - target) <= 0.15)
    ok = hits >= 8 and grid_ok
    detail = (f"{hits}/10 seeds within ±0.15 of (0.95, 2.80); grid argmax "
              f"{np.round(grid_best.design.values, 2).tolist()} "
              f"({'inside' if grid_ok else 'outside'} the box; "
              "exact-likelihood optimum is (1.013, 2.617))")
    assert report(2, ok, detail)


def test_criterion_3_shared_bank_equivalence(death1, death1_runs, death2_runs,
                                             death2_grid):
    _, space1, ufn1 = death1
    gaps = []
    grid1_best, _ = run_grid_search(space1, 0.1, ufn1)
    insh1 = max(death1_runs, key=lambda r: r[0].value)[0]
    gaps.append((abs(insh1.value - grid1_best.value),
                 2 * grid1_best.utility.std_error))
    grid2_best, _ = death2_grid
    insh2 = max(death2_runs, key=lambda r: r[0].value)[0]
    gaps.append((abs(insh2.value - grid2_best.value),
                 2 * grid2_best.utility.std_error))
    ok = all(gap <= bound for gap, bound in gaps)
    detail = "; ".join(f"n={i + 1}: |Δu| = {gap:.5f} ≤ 2 SE = {bound:.5f}"
                       for i, (gap, bound) in enumerate(gaps))
    assert report(3, ok, detail)


def test_criterion_4_conjugate_reference():
    lines, ok = [], True
    for tau2, sigma2 in ((1.0, 1.0), (4.0, 1.0), (1.0, 4.0)):
        model = NormalNormalModel(tau2, sigma2)
        truth = model.analytic_information()
        ests = [sig_nested_mc(model, np.zeros(1), 2000, 2000, seed=r)
                for r in range(50)]
        mean = np.mean([e.value for e in ests])
        se = np.mean([e.std_error for e in ests])
        good = abs(mean - truth) <= 2 * se
        ok &= good
        lines.append(f"(τ²={tau2:g},σ²={sigma2:g}): |{mean:.4f}−{truth:.4f}|"
                     f" = {abs(mean - truth):.4f} ≤ 2·SE = {2 * se:.4f}")
    assert report(4, ok, "; ".join(lines))


def test_criterion_5_pk_desk_parity(pk_run):
    model, _, _, _, rescored = pk_run
    best_u = rescored[0][0]
    ref_u = sig_nested_mc(model, PK_REFERENCE_DESIGN, 5000, 5000,
                          seed=777).value
    ratio = best_u / ref_u
    ok = ratio >= 0.98
    assert report(5, ok, f"rescored desk best {best_u:.4f} vs published "
                         f"design {ref_u:.4f} → {100 * ratio:.1f}% (need ≥ 98%)")


def test_criterion_6_sampling_windows(pk_run):
    model, space, _, trace, rescored = pk_run
    top = top_unique(trace, 20)
    windows = build_windows([s.design for s in top], 20)
    rng = np.random.default_rng(0)
    boots = [bootstrap_design(windows, space.constraints, rng)
             for _ in range(20)]
    spacing_ok = all(satisfies(space, d) for d in boots)
    # Score the optimum and the bootstraps at the same precision so the
    # nested-MC bias cancels out of the ratio.
    opt_u = sig_nested_mc(model, rescored[0][1].design.values, 1000, 1000,
                          seed=777).value
    boot_us = [sig_nested_mc(model, d.values, 1000, 1000, seed=777).value
               for d in boots]
    eff = float(np.mean(boot_us) / opt_u)
    ok = eff >= 0.95 and spacing_ok
    assert report(6, ok, f"mean bootstrap efficiency {eff:.4f} (need ≥ 0.95); "
                         f"spacing satisfied {sum(satisfies(space, d) for d in boots)}/20")


def test_criterion_7_logistic(death1):
    model = lr_model(6)
    space = lr_space(6)
    ufn = make_sig_utility(model, 500, 500)
    best, trace = run_insh(space, ufn, lr_schedule(6, iters_per_stage=5),
                           rule=AcceptanceRule("top-r-with-previous"),
                           kernel_kind="uniform", kernel_truncation="clamp",
                           seed=0, workers=4)
    top = top_unique(trace, 20)
    best_u = max(sig_nested_mc(model, s.design.values, 5000, 5000,
                               seed=777).value for s in top)
    band_ok = abs(best_u - LR_REFERENCE_UTILITY[6]) <= 0.05 * LR_REFERENCE_UTILITY[6]

    # n = 24 / 48: full budgets are not desk-reproducible; reduced-budget runs
    # are checked on properties instead of the utility level.
    prop_lines, props_ok = [], True
    for n_rows, b in ((24, 250), (48, 250)):
        pmodel, pspace = lr_model(n_rows), lr_space(n_rows)
        pufn = make_sig_utility(pmodel, b, b)
        pbest, ptrace = run_insh(
            pspace, pufn, lr_schedule(n_rows, iters_per_stage=2,
                                      initial_count=2000),
            rule=AcceptanceRule("top-r-with-previous"), kernel_kind="uniform",
            kernel_truncation="clamp", seed=0, workers=4)
        feasible = all(satisfies(pspace, s.design) for s in ptrace.all_scored())
        util = {s.design.id: s.value for s in ptrace.all_scored() if s.ok}
        mins = [min(util[i] for i in ids) for ids in ptrace.accepted_ids]
        monotone = all(b2 >= a2 - 1e-9 for a2, b2 in zip(mins, mins[1:]))
        boundary = float(np.mean(np.abs(np.abs(pbest.design.values) - 1.0) <= 0.1))
        good = feasible and monotone and boundary >= 0.5
        props_ok &= good
        prop_lines.append(f"n={n_rows}: feasible={feasible}, "
                          f"min-accepted monotone={monotone}, "
                          f"boundary prevalence {boundary:.2f}")
    ok = band_ok and props_ok
    assert report(7, ok, f"n=6 rescored utility {best_u:.4f} vs 1.99 ± 5%; "
                         + "; ".join(prop_lines))


def test_criterion_8_property_suite(death1, death1_runs):
    model, space, ufn = death1
    checks = {}

    # Best-so-far monotone across every recorded run.
    mono = all(all(b.value >= a.value for a, b in
                   zip(t.best_per_gen, t.best_per_gen[1:]))
               for _, t in death1_runs)
    checks["best-so-far monotone"] = mono

    # Byte-identical reruns at 1/2/8 workers on a real estimator.
    runs = [run_insh(space, ufn, death_schedule(1), seed=123, workers=w)
            for w in (1, 2, 8)]
    ident = all(np.array_equal(r[0].design.values, runs[0][0].design.values)
                and r[0].value == runs[0][0].value
                and [s.value for s in r[1].all_scored()]
                == [s.value for s in runs[0][1].all_scored()]
                for r in runs[1:])
    checks["byte-identical reruns (1/2/8 workers)"] = ident

    # The remaining properties (KLD >= 0, cached == uncached exactly,
    # perturbation feasibility over 1e4 draws, likelihood normalisation at
    # N <= 5) are asserted in the unit suite; re-run the two quickest here.
    from boed.space import PerturbationKernel, perturb, sample_initial
    rng = np.random.default_rng(0)
    feasible = True
    for sp, kind, scale in ((death_space(2), "gaussian", 0.1),
                            (pk_space(), "gaussian", 0.2),
                            (lr_space(6), "uniform", 0.2)):
        kernel = PerturbationKernel(kind, np.full(sp.dimension, scale))
        parents = sample_initial(sp, 10, rng=rng)
        for i in range(10_000):
            child = perturb(parents[i % 10], kernel, sp.constraints, rng)
            if not satisfies(sp, child):
                feasible = False
    checks["perturbation feasibility (3 spaces × 1e4 draws)"] = feasible

    ok = all(checks.values())
    assert report(8, ok, "; ".join(f"{k}: {v}" for k, v in checks.items()))


def test_criterion_9_muller_baseline(death1):
    model, space, _ = death1
    # Annealed target u(d)^10 sharpens the nearly flat utility marginal so the
    # histogram mode is signal rather than noise; the deterministic shared-bank
    # estimate stands in for the single-sample utility.
    ufn = make_abcde_utility(model, death_abc_config(1, bank_size=10_000),
                             param_seed=0)
    proposal = TruncatedGaussianProposal(np.array([0.2]), np.array([0.05]),
                                         np.array([10.0]))
    config = MullerConfig(6000, proposal, burn_in=1000)
    modes = []
    for seed in (0, 1, 2):
        chain = run_muller(space, lambda v, rng: ufn(v).value ** 10, config,
                           seed=seed)
        kde = stats.gaussian_kde(chain[:, 0])
        grid = np.linspace(0.05, 10.0, 1000)
        modes.append(float(grid[np.argmax(kde(grid))]))
    modes_ok = all(1.4 <= m <= 1.8 for m in modes)

    # Flat utility: the design marginal must be uniform (chi-square, 1%).
    prop = TruncatedGaussianProposal(np.array([3.0]), np.array([0.05]),
                                     np.array([10.0]))
    chain = run_muller(space, lambda v, rng: 1.0,
                       MullerConfig(60_000, prop, 2000), seed=0)
    counts, _ = np.histogram(chain[::10, 0], bins=20, range=(0.05, 10.0))
    chi2 = float(((counts - counts.mean()) ** 2 / counts.mean()).sum())
    uniform_ok = chi2 < stats.chi2.ppf(0.99, df=19)

    ok = modes_ok and uniform_ok
    assert report(9, ok, f"chain modes {np.round(modes, 3).tolist()} in "
                         f"[1.4, 1.8]: {modes_ok}; flat-utility chi² = "
                         f"{chi2:.1f} < {stats.chi2.ppf(0.99, df=19):.1f}")
