import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from skidpm.dpm import (IBM_HDD, TWO_STATE, PolicyArray, PowerStateSystem, SystemError_,
                        build_policy, expected_period_cost, expected_prudent_period_cost,
                        offline_opt, offline_opt_costs, ours_builder, policy_from_builder,
                        prediction_error, prudent_vector, prune_states, run_period, state_vector,
                        transition_costs)
from skidpm.skirental import RHO_MAX, build_cdf, build_unit_array, mu_of_rho


def brute_opt(system, length):
    return min(a * length + b for a, b in zip(system.alphas, system.betas))


class TestSystem:
    def test_ibm_breakpoints(self):
        t = IBM_HDD.breakpoints
        assert t == pytest.approx([0.12 / 0.53, 0.21 / 0.365, 0.67 / 0.105], abs=1e-12)
        assert t == pytest.approx([0.2264, 0.5753, 6.3810], abs=1e-4)
        assert prune_states(IBM_HDD) == IBM_HDD

    def test_two_state(self):
        assert TWO_STATE.breakpoints == pytest.approx([1.0])
        assert prune_states(TWO_STATE) == TWO_STATE

    def test_prune_redundant_state(self):
        raw = PowerStateSystem((1.0, 0.5, 0.4), (0.0, 0.9, 1.0))
        assert raw.breakpoints == pytest.approx([1.8, 1.0])
        pruned = prune_states(raw)
        assert pruned.alphas == (1.0, 0.4) and pruned.betas == (0.0, 1.0)
        for length in np.linspace(0, 5, 101):
            assert brute_opt(pruned, length) == pytest.approx(brute_opt(raw, length), abs=1e-15)

    @pytest.mark.parametrize("alphas,betas", [
        ((1.0,), (0.0,)),
        ((1.0, 0.5), (0.1, 1.0)),
        ((1.0, 1.0), (0.0, 1.0)),
        ((1.0, 0.5), (0.0, 0.0)),
        ((1.0, -0.5), (0.0, 1.0)),
    ])
    def test_validation(self, alphas, betas):
        with pytest.raises(SystemError_):
            PowerStateSystem(alphas, betas)


class TestOfflineOpt:
    def test_examples(self):
        j, c = offline_opt(IBM_HDD, 0.5)
        assert j == 1 and c == pytest.approx(0.355)
        assert offline_opt(IBM_HDD, 0.0) == (0, 0.0)
        j, c = offline_opt(IBM_HDD, 10.0)
        assert j == 3 and c == pytest.approx(1.0)

    def test_against_enumeration(self, rng):
        lengths = rng.uniform(0, 12, 10_000)
        ref = np.array([brute_opt(IBM_HDD, l) for l in lengths])
        assert np.allclose(offline_opt_costs(IBM_HDD, lengths), ref, atol=1e-15, rtol=0)


class TestPolicy:
    def test_two_state_is_identity(self):
        p = build_policy(TWO_STATE, 0.5, 1.2)
        d = build_cdf(1.2, mu_of_rho(1.2), 0.5)
        for t in np.linspace(0, 2, 41):
            assert p.sub_dists[0].cdf(t) == d.cdf(t)

    def test_ibm_unit_predictions(self):
        p = build_policy(IBM_HDD, 0.5, 1.2)
        preds = [d.prediction for d in p.sub_dists]
        assert preds == pytest.approx(0.5 / IBM_HDD.breakpoints, abs=1e-12)
        assert preds == pytest.approx([2.2083, 0.8690, 0.07836], abs=1e-4)

    def test_zero_prediction(self):
        assert all(d.prediction == 0 for d in build_policy(IBM_HDD, 0.0, 1.3).sub_dists)

    @given(st.floats(1.0, RHO_MAX), st.floats(0, 8), st.floats(0, 1))
    def test_thresholds_ordered(self, rho, tau, u):
        thr = build_policy(IBM_HDD, tau, rho).as_array().thresholds(np.array([u]))[0]
        assert np.all(thr[:-1] <= thr[1:] + 1e-12)


class TestRunPeriod:
    def test_u_zero_goes_deepest(self):
        p = build_policy(IBM_HDD, 1.0, 1.2)
        state, cost = run_period(p, 2.0, 0.0)
        assert state == 3 and cost == pytest.approx(IBM_HDD.alphas[-1] * 2.0 + IBM_HDD.betas[-1])

    def test_u_one_stays_active(self):
        p = build_policy(IBM_HDD, 0.1, 1.0)
        assert all(d.atom_infinity > 0 for d in p.sub_dists)
        assert run_period(p, 3.0, 1.0) == (0, 3.0)

    def test_classic_two_state(self):
        p = policy_from_builder(TWO_STATE, 0.5, lambda taus: build_unit_array(RHO_MAX, 0.0, taus))
        state, cost = run_period(p, 1.0, 0.5)
        buy = math.log(1 + 0.5 * (math.e - 1))
        assert state == 1 and cost == pytest.approx(buy + 1)
        assert cost == pytest.approx(1.6201, abs=1e-4)

    @given(st.floats(1.0, RHO_MAX), st.floats(0, 8), st.floats(0, 10), st.floats(0, 1))
    def test_cost_decomposition(self, rho, tau, length, u):
        p = build_policy(IBM_HDD, tau, rho)
        _, cost = run_period(p, length, u)
        subs = transition_costs(p, length, u)
        assert cost == pytest.approx(IBM_HDD.alphas[-1] * length + subs.sum(), abs=1e-12)

    def test_expected_matches_monte_carlo(self):
        p = build_policy(IBM_HDD, 2.0, 1.2)
        rng = np.random.default_rng(3)
        samples = np.array([run_period(p, 1.7, u)[1] for u in rng.random(20_000)])
        mean, se = samples.mean(), samples.std(ddof=1) / math.sqrt(len(samples))
        assert abs(mean - expected_period_cost(p, 1.7)) < 4 * se


class TestExpectedCost:
    def test_zero_length(self):
        p = build_policy(IBM_HDD, 1.0, 1.2)
        atoms = sum(g * d.cdf(0.0) for g, d in zip(IBM_HDD.buy_gaps, p.sub_dists))
        assert expected_period_cost(p, 0.0) == pytest.approx(atoms, abs=1e-15)

    def test_classic_two_state(self):
        p = policy_from_builder(TWO_STATE, 0.5, lambda taus: build_unit_array(RHO_MAX, 0.0, taus))
        assert expected_period_cost(p, 1.0) == pytest.approx(RHO_MAX, abs=1e-12)

    def test_error_definition(self):
        assert prediction_error(IBM_HDD, 1.0, 3.5) == pytest.approx(2.5)


class TestPrudent:
    def test_vector_example(self):
        q = prudent_vector([0.25] * 4, IBM_HDD)
        b = np.mean(IBM_HDD.betas)
        assert q[:2] == pytest.approx([0, 0])
        assert q[2] * 0.33 + q[3] * 1.0 == pytest.approx(b, abs=1e-15)
        assert q.sum() == pytest.approx(1.0)

    def test_vector_validation(self):
        with pytest.raises(ValueError):
            prudent_vector([0.5, 0.6, 0, 0], IBM_HDD)
        with pytest.raises(ValueError):
            prudent_vector([1.0, 0.0], IBM_HDD)

    @given(st.lists(st.floats(0, 1), min_size=4, max_size=4).filter(lambda v: sum(v) > 1e-3))
    def test_vector_properties(self, raw):
        p = np.array(raw) / sum(raw)
        q = prudent_vector(p, IBM_HDD)
        betas, alphas = np.array(IBM_HDD.betas), np.array(IBM_HDD.alphas)
        assert q @ betas == pytest.approx(p @ betas, abs=1e-12)
        assert q @ alphas <= p @ alphas + 1e-12
        support = np.flatnonzero(q > 0)
        assert len(support) <= 2 and (len(support) < 2 or support[1] == support[0] + 1)

    def test_two_state_unchanged(self):
        p = build_policy(TWO_STATE, 0.7, 1.3)
        for length in [0.0, 0.4, 1.0, 3.0]:
            assert expected_prudent_period_cost(p, length) == pytest.approx(
                expected_period_cost(p, length), abs=1e-12)

    @pytest.mark.parametrize("tau,length,rho", [(1.0, 1.0, 1.16), (0.3, 2.0, 1.3), (4.0, 0.5, 1.05),
                                                (2.0, 7.0, RHO_MAX)])
    def test_against_quadrature(self, tau, length, rho):
        p = build_policy(IBM_HDD, tau, rho)
        alphas = np.array(IBM_HDD.alphas)
        rate = lambda t: prudent_vector(np.clip(state_vector(p, t), 0, None) / np.clip(
            state_vector(p, t), 0, None).sum(), IBM_HDD) @ alphas
        kinks = sorted({t for t in p.as_array().thresholds(np.linspace(0, 1, 3))[0] if t < length})
        running = quad(rate, 0, length, points=kinks or None, limit=500, epsabs=1e-12)[0]
        wake = prudent_vector(state_vector(p, length), IBM_HDD) @ np.array(IBM_HDD.betas)
        analytic = expected_prudent_period_cost(p, length)
        assert analytic == pytest.approx(running + wake, abs=1e-8)
        assert analytic <= expected_period_cost(p, length) + 1e-12

    def test_ibm_example(self):
        p = build_policy(IBM_HDD, 1.0, 1.16)
        assert expected_prudent_period_cost(p, 1.0) <= expected_period_cost(p, 1.0)

    def test_zero_length(self):
        p = build_policy(IBM_HDD, 2.0, 1.2)
        assert expected_prudent_period_cost(p, 0.0) == pytest.approx(expected_period_cost(p, 0.0), abs=1e-15)

    def test_batch_never_above_plain(self, rng):
        lengths = rng.uniform(0, 8, 3000)
        preds = np.maximum(0, lengths + 2 * rng.standard_normal(3000))
        for rho in [1.0, 1.16, 1.4, RHO_MAX]:
            pol = PolicyArray.build(IBM_HDD, preds, ours_builder(rho))
            assert np.all(pol.prudent_costs(lengths) <= pol.expected_costs(lengths) + 1e-12)
