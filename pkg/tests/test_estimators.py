"""Estimators: ball frequencies, reweighting, transforms, star oracle."""

import json
import math

import numpy as np
import pytest

import ssqlab as s
from ssqlab.estimators import binomial_halfwidth, chi_square_gof

SYM = s.ModelSpec(lam=(10.0, 10.0), mu=(20.0, 20.0))


class TestEstimateQ:
    def test_partition_identity_exact(self):
        est = s.estimate_q(SYM, s.HOMOGENEOUS, 5.0, 1.0, 0.25, 200, 50)
        assert math.fsum([*est.q_hat, est.none_frac]) == 1.0
        assert est.counts.sum() + est.none_count == est.n

    def test_symmetric_frequencies(self):
        est = s.estimate_q(SYM, s.HOMOGENEOUS, 10.0, 1.0, 0.25, 400, 51)
        band = 3.0 * math.sqrt(0.25 / 400)
        assert abs(est.q_hat[0] - 0.5) <= band + est.none_frac

    def test_label_equivariance_exact(self):
        spec = s.ModelSpec(lam=(4.0, 16.0), mu=(16.0, 20.0))  # 0.25 + 0.8 != 1
        spec = s.ModelSpec(lam=(4.0, 15.0), mu=(16.0, 20.0))
        assert s.validate(spec).ok
        est = s.estimate_q(spec, s.HOMOGENEOUS, 5.0, 1.0, 0.25, 150, 52)
        est_p = s.estimate_q(s.permute_spec(spec, (1, 0)), s.HOMOGENEOUS,
                             5.0, 1.0, 0.25, 150, 52)
        assert np.array_equal(est_p.q_hat, est.q_hat[[1, 0]])
        assert est_p.none_frac == est.none_frac

    def test_workers_do_not_change_results(self):
        a = s.estimate_q(SYM, s.HOMOGENEOUS, 5.0, 1.0, 0.25, 150, 53, workers=1)
        b = s.estimate_q(SYM, s.HOMOGENEOUS, 5.0, 1.0, 0.25, 150, 53, workers=3)
        assert np.array_equal(a.q_hat, b.q_hat)
        assert np.array_equal(a.counts, b.counts)

    def test_minimum_replications(self):
        with pytest.raises(ValueError, match="n >= 100"):
            s.estimate_q(SYM, s.HOMOGENEOUS, 10.0, 1.0, 0.25, 50, 54)

    def test_three_class_symmetry(self):
        spec = s.ModelSpec(lam=(5.0, 5.0, 5.0), mu=(15.0, 15.0, 15.0))
        est = s.estimate_q(spec, s.HOMOGENEOUS, 5.0, 1.0, 0.25, 300, 56)
        assert math.fsum([*est.q_hat, est.none_frac]) == 1.0
        joint = 3.0 * math.sqrt(2.0) * float(np.max(est.se())) + 1e-9
        for i in range(3):
            for j in range(i):
                assert abs(est.q_hat[i] - est.q_hat[j]) <= joint

    def test_result_doc_schema(self):
        est = s.estimate_q(SYM, s.HOMOGENEOUS, 5.0, 1.0, 0.25, 120, 55)
        doc = est.result_doc(55)
        assert set(doc) == {"estimator", "params", "values", "ci", "seed", "n"}
        json.dumps(doc)


class TestDyadicCauchy:
    def test_row_count(self):
        rows = s.dyadic_cauchy(SYM, 1.0, 0.25, (5.0, 10.0, 20.0), 120, 60)
        assert len(rows) == 2

    def test_requires_dyadic_scales(self):
        with pytest.raises(ValueError, match="dyadic"):
            s.dyadic_cauchy(SYM, 1.0, 0.25, (4.0, 9.0), 120, 61)

    def test_symmetric_differences_near_zero(self):
        rows = s.dyadic_cauchy(SYM, 1.0, 0.25, (5.0, 10.0), 400, 62)
        assert rows[0].diff[0] <= rows[0].ci_half_width[0] + 3.0 * math.sqrt(0.25 / 400)


class TestLikelihoodWeight:
    MILD = s.ModelSpec(lam=(10.0, 10.0), mu=(20.0, 20.0),
                       lam_hat=(0.5, -0.5), mu_hat=(0.2, 0.0))

    def test_identity_weight(self):
        m = s.ScaledModel(SYM, 10.0)
        rec = s.simulate(m, s.StateVector.zero(2), s.StopCondition.radial_reaches(1.0),
                         s.stream(63, 0))
        assert s.likelihood_weight(rec, m, m) == 1.0

    def test_mean_weight_one(self):
        frm = s.ScaledModel(self.MILD, 10.0, s.HOMOGENEOUS)
        to = s.ScaledModel(self.MILD, 10.0, s.GENERAL)
        n = 400
        w = np.empty(n)
        for k in range(n):
            rec = s.simulate(frm, s.StateVector.zero(2),
                             s.StopCondition.radial_reaches(1.0), s.stream(64, k))
            w[k] = s.likelihood_weight(rec, frm, to)
        se = w.std(ddof=1) / math.sqrt(n)
        assert abs(w.mean() - 1.0) <= 3.0 * se

    def test_rate_mismatch_on_different_class_count(self):
        three = s.ModelSpec(lam=(10.0, 10.0, 10.0), mu=(30.0, 30.0, 30.0))
        m2 = s.ScaledModel(SYM, 10.0)
        m3 = s.ScaledModel(three, 10.0)
        rec = s.simulate(m2, s.StateVector.zero(2), s.StopCondition.radial_reaches(1.0),
                         s.stream(65, 0))
        with pytest.raises(s.RateMismatch):
            s.likelihood_weight(rec, m2, m3)

    def test_rate_mismatch_on_tie_break(self):
        other = s.ModelSpec(lam=(10.0, 10.0), mu=(20.0, 20.0),
                            tie_break=s.TieBreakRule({frozenset({0, 1}): (0.3, 0.7)}))
        m1 = s.ScaledModel(SYM, 10.0)
        m2 = s.ScaledModel(other, 10.0)
        rec = s.simulate(m1, s.StateVector.zero(2), s.StopCondition.radial_reaches(1.0),
                         s.stream(66, 0))
        with pytest.raises(s.RateMismatch):
            s.likelihood_weight(rec, m1, m2)


class TestReweightedQ:
    def test_matches_direct_general_estimate(self):
        # mild second-order perturbation keeps the weights well conditioned
        spec = s.ModelSpec(lam=(10.0, 10.0), mu=(20.0, 20.0), lam_hat=(0.5, -0.5))
        n = 600
        rew = s.reweighted_q(spec, 10.0, 1.0, 0.25, n, 70)
        direct = s.estimate_q(spec, s.GENERAL, 10.0, 1.0, 0.25, n, 71)
        joint = 3.0 * np.sqrt(rew.se() ** 2 + direct.se() ** 2)
        assert np.all(np.abs(rew.q_hat - direct.q_hat) <= joint)
        assert abs(rew.mean_weight - 1.0) <= 0.2

    def test_identity_modes_give_unit_weights(self):
        rew = s.reweighted_q(SYM, 10.0, 1.0, 0.25, 150, 72,
                             from_mode=s.HOMOGENEOUS, to_mode=s.HOMOGENEOUS)
        assert rew.mean_weight == 1.0
        assert math.fsum([*rew.q_hat, rew.none_hat]) == pytest.approx(1.0, abs=1e-12)


class TestRbmGof:
    def test_passes_on_symmetric_model(self):
        res = s.rbm_gof(SYM, s.HOMOGENEOUS, 10.0, 5.0, 600, 73)
        assert res.passed
        assert res.statistic <= res.threshold

    def test_rejects_empty_sample(self):
        with pytest.raises(ValueError, match="n > 0"):
            s.rbm_gof(SYM, s.HOMOGENEOUS, 10.0, 5.0, 0, 74)

    def test_threshold_matches_level(self):
        from scipy import stats

        res = s.rbm_gof(SYM, s.HOMOGENEOUS, 5.0, 2.0, 200, 75)
        assert res.threshold == pytest.approx(float(stats.kstwo.ppf(0.99, 200)))


class TestQueueWorkloadTransform:
    def test_exact_zero_homogeneous(self):
        rng = np.random.default_rng(76)
        for r in (3.0, 7.0, 10.0, 19.0):
            m = s.ScaledModel(SYM, r)
            for _ in range(200):
                state = s.StateVector(rng.integers(0, 1000, size=2))
                assert s.queue_workload_transform(state, m) == 0.0

    def test_general_mode_matches_direct_arithmetic(self):
        spec = s.ModelSpec(lam=(10.0, 10.0), mu=(20.0, 20.0), mu_hat=(2.0, 0.0))
        m = s.ScaledModel(spec, 10.0, s.GENERAL)
        state = s.StateVector(np.array([100, 40]))
        # direct evaluation of max_i |Q_i / r - mu_i * r Q_i / mu_r_i|
        q_hat = state.Q / 10.0
        x_hat = 10.0 * state.Q / m.mu_r
        direct = float(np.max(np.abs(q_hat - np.array(spec.mu) * x_hat)))
        got = s.queue_workload_transform(state, m)
        assert got == pytest.approx(direct, rel=1e-10)
        # the factor reduces to mu_hat_1 / r = 0.2 on class 1
        assert got == pytest.approx(0.2 * x_hat[0], rel=1e-12)

    def test_vanishes_in_r_at_fixed_scaled_state(self):
        spec = s.ModelSpec(lam=(10.0, 10.0), mu=(20.0, 20.0), mu_hat=(2.0, 0.0))
        vals = []
        for r in (10.0, 40.0, 160.0):
            m = s.ScaledModel(spec, r, s.GENERAL)
            q1 = int(round(0.5 * m.mu_r[0] / r))  # scaled workload near 0.5
            state = s.StateVector(np.array([q1, 0]))
            vals.append(s.queue_workload_transform(state, m))
        assert vals[0] > vals[1] > vals[2]


class TestStarChain:
    def test_immediate_absorption(self):
        out = s.star_absorption([0.2, 0.3, 0.5], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0])
        assert np.allclose(out, [0.2, 0.3, 0.5], atol=1e-15)

    def test_symmetric_two_leaves(self):
        out = s.star_absorption([0.5, 0.5], [0.5, 0.5], [0.5, 0.5])
        assert np.allclose(out, [0.5, 0.5], atol=1e-15)

    def test_frozen_example(self):
        # 0.6*0.5 / (1 - (0.6*0.5 + 0.4*0.25)) = 0.3/0.6 = 0.5
        out = s.star_absorption([0.6, 0.4], [0.5, 0.25], [0.5, 0.75])
        assert out[0] == pytest.approx(0.5, abs=1e-15)
        solved = s.star_absorption_solve([0.6, 0.4], [0.5, 0.25], [0.5, 0.75])
        assert np.allclose(out, solved, atol=1e-12)

    def test_closed_form_vs_solve_randomized(self):
        rng = np.random.default_rng(77)
        for _ in range(30):
            n = int(rng.integers(2, 6))
            p0F = rng.dirichlet(np.ones(n))
            pF0 = rng.uniform(0.0, 0.95, size=n)
            closed = s.star_absorption(p0F, pF0, 1.0 - pF0)
            solved = s.star_absorption_solve(p0F, pF0, 1.0 - pF0)
            assert np.max(np.abs(closed - solved)) <= 1e-12
            assert math.fsum(closed) == pytest.approx(1.0, abs=1e-12)

    def test_monte_carlo_agreement(self):
        p0F, pF0 = np.array([0.6, 0.4]), np.array([0.5, 0.25])
        closed = s.star_absorption(p0F, pF0, 1.0 - pF0)
        freq = s.star_chain_mc(p0F, pF0, 1.0 - pF0, 20_000, s.stream(78, 0))
        se = np.sqrt(closed * (1.0 - closed) / 20_000)
        assert np.all(np.abs(freq - closed) <= 3.0 * se)

    def test_degenerate_chain(self):
        with pytest.raises(s.DegenerateChain):
            s.star_absorption([0.5, 0.5], [1.0, 1.0], [0.0, 0.0])

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            s.star_absorption([0.5, 0.4], [0.5, 0.5], [0.5, 0.5])
        with pytest.raises(ValueError):
            s.star_absorption([0.5, 0.5], [0.5, 0.5], [0.6, 0.5])


class TestTubeExit:
    def test_frequency_in_unit_interval(self):
        res = s.tube_exit_freq(SYM, s.HOMOGENEOUS, 5.0, 1.0, 0.25, 100, 79)
        assert 0.0 <= res.freq <= 1.0
        assert res.ci_half_width >= 0.0

    def test_axis_start_is_admissible(self):
        m = s.ScaledModel(SYM, 5.0)
        init = s.StateVector(np.array([40, 0]))  # on an axis: F = 0
        res = s.tube_exit_freq(SYM, s.HOMOGENEOUS, 5.0, 1.0, 0.25, 100, 80, init=init)
        assert 0.0 <= res.freq <= 1.0

    def test_inadmissible_start_rejected(self):
        init = s.StateVector(np.array([200, 200]))  # F = 2.0 > gamma1 * r^-kappa0
        with pytest.raises(ValueError, match="gamma1"):
            s.tube_exit_freq(SYM, s.HOMOGENEOUS, 5.0, 1.0, 0.25, 100, 81, init=init)

    def test_default_horizon_is_log_r(self):
        res = s.tube_exit_freq(SYM, s.HOMOGENEOUS, 5.0, None, 0.25, 100, 82)
        assert res.params["horizon"] == pytest.approx(math.log(5.0))


class TestStatsHelpers:
    def test_chi_square_distinguishes(self):
        assert chi_square_gof([480, 520], [0.5, 0.5]).passed
        assert not chi_square_gof([300, 700], [0.5, 0.5]).passed

    def test_halfwidth_wilson_fallback(self):
        # tiny counts: Wilson stays within (0, 1) and is wider than naive
        naive = 1.96 * math.sqrt((2 / 100) * (1 - 2 / 100) / 100)
        assert binomial_halfwidth(2, 100) > naive

    def test_halfwidth_normal_regime(self):
        expected = 1.959963984540054 * math.sqrt(0.5 * 0.5 / 1000)
        assert binomial_halfwidth(500, 1000) == pytest.approx(expected, rel=1e-12)
