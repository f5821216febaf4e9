"""End-to-end acceptance checks, one test per criterion.

Each test records a ``PASS``/``FAIL`` line (printed live and repeated in the
terminal summary) before asserting.
"""
import dataclasses
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from skidpm.cli import resolve_config
from skidpm.distribution import bounded_variant
from skidpm.dpm import IBM_HDD, PolicyArray, ours_builder, prudent_vector
from skidpm.experiments import run_experiment, summarize
from skidpm.oracles import (competitiveness_sweep, default_rho_grid, dominance_check,
                            dpm_reduction_sweep, grid, mc_expected_cost, monotonicity_check,
                            prudence_check, quad_expected_cost, tightness_check)
from skidpm.skirental import (RHO_MAX, build_cdf, case3_cost_at_tau, mu_of_rho, mu_tau, rho_tilde,
                              solve_T)

RHOS = default_rho_grid(0.05)
TAUS = grid(0, 3, 0.05)
XS = grid(0, 5, 0.05)


def verdict(number, ok, detail, capsys):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


def test_criterion_1_competitiveness(capsys):
    start = time.perf_counter()
    res = competitiveness_sweep(RHOS, TAUS, XS, mode="mu")
    elapsed = time.perf_counter() - start
    ok = res.max_violation <= 1e-7 and elapsed < 60
    verdict(1, ok, f"max violation {res.max_violation:.2e} over {res.checked} points "
                   f"in {elapsed:.2f}s (tol 1e-7, limit 60s)", capsys)


def test_criterion_2_mu_curve(capsys):
    rt = rho_tilde()
    t = solve_T(rt)
    branches = ((1 - rt * (math.e - 1) / math.e) / math.log(2), rt * (1 - t) * math.exp(-t))
    ok = (mu_of_rho(1.0) == 1.0 and mu_of_rho(RHO_MAX) == 0.0
          and abs(mu_of_rho(rt) - 0.3852) <= 5e-4 and abs(rt - 1.16) < 0.005
          and abs(branches[0] - branches[1]) < 1e-10)
    verdict(2, ok, f"mu(1)={mu_of_rho(1.0)}, mu(e/(e-1))={mu_of_rho(RHO_MAX)}, "
                   f"rho~={rt:.6f}, mu(rho~)={mu_of_rho(rt):.6f}, branch gap {abs(branches[0] - branches[1]):.1e}",
            capsys)


def test_criterion_3_dominance_and_tightness(capsys):
    dom = dominance_check(RHOS, TAUS)
    rt = rho_tilde()
    eq_ln2 = max(abs(mu_tau(r, math.log(2)) - mu_of_rho(r)) for r in RHOS if r >= rt)
    eq_1mt = max(abs(mu_tau(r, 1 - solve_T(r)) - mu_of_rho(r)) for r in RHOS if 1 < r < rt)
    # at rho = 1 the worst prediction tau = 1 is only approached from below
    eq_1mt = max(eq_1mt, abs(mu_tau(1.0, 1 - 1e-9) - mu_of_rho(1.0)))
    tight = max(tightness_check(r, t).max_abs_deviation for r in RHOS for t in TAUS)
    anchor = max(abs(case3_cost_at_tau(r, mu_tau(r, t), t) - r)
                 for r in RHOS for t in TAUS if t > 1 and mu_tau(r, t) > 0)
    anchor_dist = max(abs(build_cdf(r, mu_tau(r, t), t).expected_cost(t) - r)
                      for r in RHOS for t in TAUS if t > 1 and mu_tau(r, t) * t < 1)
    ok = (dom.max_violation <= 1e-9 and eq_ln2 <= 1e-6 and eq_1mt <= 1e-6 and tight <= 1e-7
          and anchor <= 1e-7 and anchor_dist <= 1e-7)
    verdict(3, ok, f"mu_tau-mu max {dom.max_violation:.1e}; |mu_tau-mu| at ln2 {eq_ln2:.1e}, "
                   f"at 1-T {eq_1mt:.1e}; tightness {tight:.1e}; case-3 anchor {max(anchor, anchor_dist):.1e}",
            capsys)


def test_criterion_4_monotonicity(capsys):
    ts = grid(0, 5, 0.01)
    mono = monotonicity_check(RHOS, TAUS, ts, mode="mu")
    control = monotonicity_check(RHOS, TAUS, ts, mode="mu_tau")
    ok = mono.max_violation <= 1e-10 and control.max_violation > 1e-10
    verdict(4, ok, f"mu(rho) max drop {mono.max_violation:.1e} (tol 1e-10); "
                   f"mu_tau control drop {control.max_violation:.3f} at {control.worst}", capsys)


def test_criterion_5_dpm_reduction(capsys):
    ls = grid(0, 10, 0.05)
    red = dpm_reduction_sweep(IBM_HDD, RHOS, ls, ls)
    classic = dpm_reduction_sweep(IBM_HDD, [RHO_MAX], ls, ls, mu=0.0)
    alphas_ok = IBM_HDD.alphas == (1.0, 0.47, 0.105, 0.0) and IBM_HDD.betas == (0.0, 0.12, 0.33, 1.0)
    ok = alphas_ok and red.passed and classic.passed
    verdict(5, ok, f"IBM max violation {red.max_violation:.1e} over {red.checked} points; "
                   f"mu=0 at e/(e-1): {classic.max_violation:.1e} (tol 1e-7)", capsys)


def test_criterion_6_prudence(capsys, rng):
    vec = prudence_check(IBM_HDD, 10_000, seed=11)
    betas = np.asarray(IBM_HDD.betas)
    n = 2000
    lengths = rng.uniform(0, 10, n)
    preds = rng.uniform(0, 10, n)
    worst_wake, worst_cost = 0.0, -math.inf
    for rho in [1.0, 1.05, 1.16, 1.3, RHO_MAX]:
        pol = PolicyArray.build(IBM_HDD, preds, ours_builder(rho))
        worst_cost = max(worst_cost, float(np.max(pol.prudent_costs(lengths) - pol.expected_costs(lengths))))
        for frac in np.linspace(0, 1, 11):
            t = frac * lengths
            cdfs = np.stack(pol.cdfs(t), axis=1)
            p = -np.diff(np.concatenate([np.ones((n, 1)), cdfs, np.zeros((n, 1))], axis=1), axis=1)
            for i in range(0, n, 20):
                q = prudent_vector(np.clip(p[i], 0, None) / np.clip(p[i], 0, None).sum(), IBM_HDD)
                worst_wake = max(worst_wake, abs(q @ betas - np.clip(p[i], 0, None) @ betas
                                                 / np.clip(p[i], 0, None).sum()))
    ok = vec.passed(1e-12) and worst_wake <= 1e-12 and worst_cost <= 1e-12
    verdict(6, ok, f"random vectors: wake-up err {vec.wakeup_error:.1e}, rate increase {vec.rate_increase:.1e}; "
                   f"trajectories: wake-up err {worst_wake:.1e}, cost increase {worst_cost:.1e}", capsys)


def test_criterion_7_bounded_variant(capsys):
    parts, worst_real = [], 0.0
    us = np.linspace(0, 1, 201)
    for eps in (0.1, 1.0):
        cutoff = 3 + 1 / eps
        res = competitiveness_sweep(RHOS, TAUS, grid(0, cutoff + 2, 0.05), "mu",
                                    bound_mu_scale=1 + eps, cutoff=cutoff)
        parts.append(res)
        cap = 4 + 1 / eps
        for rho in RHOS:
            for tau in (0.0, 0.5, 1.5, 3.0, 8.0):
                b = build_cdf(rho, mu_of_rho(rho), tau).array.bounded(cutoff)
                buys = b.take(np.zeros(len(us), dtype=int)).buy_time(us)
                # the worst season for a buy at t ends right after it; never buying is unbounded
                realised = np.where(np.isfinite(buys), 1 + buys, np.inf)
                worst_real = max(worst_real, float(np.max(realised)) / cap)
    ok = all(r.passed for r in parts) and worst_real <= 1.0
    verdict(7, ok, f"sweep eps=0.1 {parts[0].max_violation:.1e}, eps=1 {parts[1].max_violation:.1e} "
                   f"(tol 1e-7); worst realised cost / beta(4+1/eps) = {worst_real:.4f}", capsys)


def _cells(rows):
    return {(r["algorithm"], r["rho"], r["sigma"], r["prudent"]): r for r in summarize(rows)}


@pytest.mark.slow
def test_criterion_8_psk4_two_state(capsys):
    cfg = resolve_config("psk4")
    cfg = dataclasses.replace(cfg, systems=tuple(s for s in cfg.systems if s[0] == "two_state"))
    assert cfg.dataset.n == 10_000 and cfg.repeats == 10 and cfg.eps1 == 0.1
    start = time.perf_counter()
    cells = _cells(run_experiment(cfg))
    elapsed = time.perf_counter() - start
    combined = {k: v for k, v in cells.items() if k[0].endswith("-combined")}
    learning = ("ours-combined", "psk-combined", "adjkr-combined")
    at0 = max(combined[(a, None, 0.0, True)]["mean_ratio"] for a in learning)
    max_std = max(v["std_ratio"] for v in combined.values())
    order = [(s, combined[("ours-combined", None, s, True)]["mean_ratio"],
              combined[("psk-combined", None, s, True)]["mean_ratio"],
              combined[("adjkr-combined", None, s, True)]["mean_ratio"])
             for s in cfg.sigmas if 1 <= s <= 3]
    order_bad = [o for o in order if not (o[1] <= o[2] and o[1] <= o[3])]
    at5 = max(v["mean_ratio"] for k, v in combined.items() if k[2] == 5.0)
    ok = at0 <= 1.03 and max_std < 0.025 and not order_bad and at5 <= 1.70
    verdict(8, ok, f"sigma=0 worst {at0:.4f} (<=1.03); max std {max_std:.4f} (<0.025); "
                   f"ordering violations {[(s, round(a, 4), round(b, 4), round(c, 4)) for s, a, b, c in order_bad]}; "
                   f"sigma=5 worst {at5:.4f} (<=1.70); {elapsed:.0f}s", capsys)


@pytest.mark.slow
def test_criterion_9_prudence_ablation(capsys):
    cfg = resolve_config("psk8")
    assert cfg.prudent == (True, False) and [s for s, _ in cfg.systems] == ["ibm"]
    # deterministic policies do not change under the prudent conversion
    cfg = dataclasses.replace(cfg, algorithms=tuple(a for a in cfg.algorithms
                                                    if all(e.randomized for e in a.experts)))
    cells = _cells(run_experiment(cfg))
    per_sigma, worse = [], []
    for s in cfg.sigmas:
        keys = [k for k in cells if k[2] == s and k[3]]
        on = np.mean([cells[k]["mean_ratio"] for k in keys])
        off = np.mean([cells[(k[0], k[1], s, False)]["mean_ratio"] for k in keys])
        per_sigma.append(off - on)
        worse += [(k[0], k[1], s) for k in keys
                  if cells[(k[0], k[1], s, False)]["mean_ratio"] < cells[k]["mean_ratio"] - 1e-12]
    diffs = np.array(per_sigma)
    ok = bool(np.all(diffs >= 0) and np.sum(diffs > 0) >= len(diffs) / 2)
    verdict(9, ok, f"non-prudent minus prudent mean ratio per sigma: min {diffs.min():.4f}, "
                   f"max {diffs.max():.4f}, positive in {int(np.sum(diffs > 0))}/{len(diffs)}; "
                   f"cells where prudence is worse: {worse}", capsys)


def test_criterion_10_oracles(capsys):
    rng = np.random.default_rng(2024)

    def random_dist():
        rho = rng.uniform(1, RHO_MAX)
        tau = rng.uniform(0, 4)
        mu = rng.uniform(mu_tau(rho, tau), 1.0)
        d = build_cdf(rho, mu, tau)
        return bounded_variant(d, rng.choice([1.0, 0.1])) if rng.random() < 0.25 else d

    quad_err = 0.0
    for _ in range(1000):
        d, x = random_dist(), rng.uniform(0, 6)
        quad_err = max(quad_err, abs(quad_expected_cost(d, x) - d.expected_cost(x)))
    worst_z = 0.0
    for i in range(100):
        d, x = random_dist(), rng.uniform(0, 6)
        mean, se = mc_expected_cost(d, x, n=1_000_000, seed=i)
        diff = abs(mean - d.expected_cost(x))
        worst_z = max(worst_z, diff / se if se > 0 else (0.0 if diff == 0 else math.inf))
    ok = quad_err <= 1e-8 and worst_z <= 4
    verdict(10, ok, f"quadrature max |diff| {quad_err:.1e} on 1000 cases (tol 1e-8); "
                    f"Monte Carlo worst |diff|/stderr {worst_z:.2f} on 100 cases (tol 4)", capsys)
