"""EM round behavior: the digamma hand example, a direct-formula oracle,
component death, degeneracy policies, equivariance, and fit/trace plumbing."""

import numpy as np
import pytest
import scipy.special

from mdmsim import (
    ClientPopulation,
    ClientRecord,
    DegenerateClientError,
    InferenceConfig,
    MdmParams,
    NumericError,
    RngHandle,
    em_round,
    fit,
    gen_synthetic_federation,
    get_preset,
    log_likelihood,
    theorem1_update,
)
from mdmsim.federation import EmAggregate
from mdmsim.inference import apply_em_aggregate


def cfg_for(k, rounds=0, **kwargs):
    return InferenceConfig(n_components=k, n_rounds=rounds, **kwargs)


class TestHandExample:
    """Single client c=[2,0], n=2, K=1, alpha=[1,1]. The digamma recurrence
    gives exact rationals: u = [psi(3)-psi(1), psi(1)-psi(1)] = [3/2, 0] and
    v = psi(4)-psi(2) = 5/6, so alpha' = [1*(3/2)/(5/6), 0] = [9/5, 0], with
    the zero floored."""

    def test_alpha_update(self):
        pop = ClientPopulation([ClientRecord(counts=np.array([2, 0]), n=2)])
        params = MdmParams(weights=[1.0], alphas=[[1.0, 1.0]], count_dists=({2: 1.0},))
        out = theorem1_update(pop.records, params)
        assert out.alphas[0][0] == pytest.approx(9.0 / 5.0, abs=1e-12)
        assert out.alphas[0][1] == 1e-8  # floored exactly
        assert out.weights.tolist() == [1.0]
        assert out.count_dists == ({2: 1.0},)


class TestDirectFormulaOracle:
    def test_update_matches_independent_evaluation(self):
        # recompute the whole update in the test with scipy digamma
        params = MdmParams(
            weights=[0.3, 0.7],
            alphas=[[0.5, 1.5, 2.0], [4.0, 0.2, 1.0]],
            count_dists=({4: 0.5, 6: 0.5}, {4: 0.75, 6: 0.25}),
        )
        records = [
            ClientRecord(counts=np.array([2, 1, 1]), n=4),
            ClientRecord(counts=np.array([0, 3, 3]), n=6),
            ClientRecord(counts=np.array([4, 0, 0]), n=4),
            ClientRecord(counts=np.array([1, 1, 4]), n=6),
        ]
        counts = np.stack([r.counts for r in records]).astype(float)
        ns = np.array([float(r.n) for r in records])

        log_joint = np.empty((4, 2))
        for k in range(2):
            a = params.alphas[k]
            a0 = a.sum()
            log_joint[:, k] = (
                scipy.special.gammaln(ns + 1)
                + scipy.special.gammaln(a0)
                - scipy.special.gammaln(ns + a0)
                + (scipy.special.gammaln(counts + a) - scipy.special.gammaln(counts + 1)
                   - scipy.special.gammaln(a)).sum(axis=1)
                + np.log([params.count_dists[k][int(n)] for n in ns])
                + np.log(params.weights[k])
            )
        resp = np.exp(log_joint - log_joint.max(axis=1, keepdims=True))
        resp /= resp.sum(axis=1, keepdims=True)

        expected_tau = resp.sum(axis=0) / 4
        expected_tau /= expected_tau.sum()
        expected_alpha = np.empty((2, 3))
        for k in range(2):
            a = params.alphas[k]
            u = (resp[:, k:k + 1] * (scipy.special.digamma(counts + a)
                                     - scipy.special.digamma(a))).sum(axis=0)
            v = (resp[:, k] * (scipy.special.digamma(ns + a.sum())
                               - scipy.special.digamma(a.sum()))).sum()
            expected_alpha[k] = a * u / v

        out = theorem1_update(records, params)
        np.testing.assert_allclose(out.weights, expected_tau, atol=1e-12)
        np.testing.assert_allclose(out.alphas, expected_alpha, atol=1e-12)
        for k in range(2):
            hist = {
                n: resp[ns == n, k].sum() / resp[:, k].sum() for n in (4, 6)
            }
            assert out.count_dists[k] == pytest.approx(hist, abs=1e-12)


class TestSingleComponent:
    def test_weights_stay_one_and_counts_go_empirical(self):
        records = [
            ClientRecord(counts=np.array([1, 1]), n=2),
            ClientRecord(counts=np.array([2, 2]), n=4),
            ClientRecord(counts=np.array([3, 1]), n=4),
        ]
        params = MdmParams(
            weights=[1.0], alphas=[[1.0, 1.0]], count_dists=({2: 0.5, 4: 0.5},)
        )
        out = theorem1_update(records, params)
        assert out.weights.tolist() == [1.0]
        assert out.count_dists[0] == pytest.approx({2: 1 / 3, 4: 2 / 3}, abs=1e-12)

    def test_identical_responsibilities_reproduce_weights(self):
        # two identical components: every client splits responsibility evenly
        alpha = [1.0, 2.0]
        params = MdmParams(
            weights=[0.5, 0.5], alphas=[alpha, alpha], count_dists=({4: 1.0}, {4: 1.0})
        )
        records = [ClientRecord(counts=np.array([i, 4 - i]), n=4) for i in range(5)]
        out = theorem1_update(records, params)
        np.testing.assert_allclose(out.weights, [0.5, 0.5], atol=1e-12)


class TestComponentDeath:
    def test_dead_component_keeps_previous_parameters(self):
        # zero mixture weight drives every responsibility for that component
        # to zero, which is below any death threshold
        params = MdmParams(
            weights=[1.0, 0.0],
            alphas=[[1.0, 1.0], [7.0, 9.0]],
            count_dists=({4: 1.0}, {3: 0.5, 4: 0.5}),
        )
        records = [
            ClientRecord(counts=np.array([2, 2]), n=4),
            ClientRecord(counts=np.array([4, 0]), n=4),
        ]
        out = theorem1_update(records, params)
        np.testing.assert_array_equal(out.alphas[1], [7.0, 9.0])
        assert out.count_dists[1] == {3: 0.5, 4: 0.5}
        np.testing.assert_allclose(out.weights, [1.0, 0.0], atol=1e-15)

    def test_empty_aggregate_rejected(self):
        params = MdmParams(weights=[1.0], alphas=[[1.0, 1.0]], count_dists=({4: 1.0},))
        agg = EmAggregate(
            resp_total=np.zeros(1),
            count_hist={},
            alpha_num=np.zeros((1, 2)),
            alpha_den=np.zeros(1),
            cohort_size=0,
        )
        with pytest.raises(NumericError):
            apply_em_aggregate(agg, params, cfg_for(1))


class TestDegeneracyPolicy:
    def population_with_orphan(self):
        return ClientPopulation(
            [
                ClientRecord(counts=np.array([2, 2]), n=4),
                ClientRecord(counts=np.array([3, 1]), n=4),
                ClientRecord(counts=np.array([5, 0]), n=5),  # unsupported n
            ]
        )

    def params(self):
        return MdmParams(weights=[1.0], alphas=[[1.0, 1.0]], count_dists=({4: 1.0},))

    @pytest.mark.parametrize("agg", ["fused", "per_client"])
    def test_skip_drops_orphans(self, agg):
        out = theorem1_update(
            self.population_with_orphan(),
            self.params(),
            cfg_for(1, aggregation=agg, degenerate_policy="skip"),
        )
        # the surviving two clients both have n=4
        assert out.count_dists[0] == {4: 1.0}

    @pytest.mark.parametrize("agg", ["fused", "per_client"])
    def test_error_policy_raises(self, agg):
        with pytest.raises(DegenerateClientError):
            theorem1_update(
                self.population_with_orphan(),
                self.params(),
                cfg_for(1, aggregation=agg, degenerate_policy="error"),
            )

    def test_skip_divisor_counts_contributors_only(self):
        # tau must be normalized by contributing clients, not the raw cohort
        params = MdmParams(
            weights=[0.5, 0.5],
            alphas=[[1.0, 1.0], [5.0, 1.0]],
            count_dists=({4: 1.0}, {4: 1.0}),
        )
        out = theorem1_update(self.population_with_orphan(), params, cfg_for(2))
        assert out.weights.sum() == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("agg", ["fused", "per_client"])
    def test_all_degenerate_rejected(self, agg):
        pop = ClientPopulation([ClientRecord(counts=np.array([5, 0]), n=5)])
        with pytest.raises(NumericError):
            theorem1_update(pop, self.params(), cfg_for(1, aggregation=agg))


class TestEquivariance:
    def test_update_commutes_with_component_permutation(self):
        truth = get_preset("appendixA")
        records, _ = gen_synthetic_federation(truth, 60, RngHandle(seed=3))
        params = truth
        out = theorem1_update(records, params)
        out_perm = theorem1_update(records, params.permuted([2, 0, 1]))
        np.testing.assert_allclose(out_perm.alphas, out.permuted([2, 0, 1]).alphas, rtol=1e-12)
        np.testing.assert_allclose(out_perm.weights, out.permuted([2, 0, 1]).weights, rtol=1e-12)


class TestEmRound:
    def test_full_cohort_equals_batch_update(self):
        truth = get_preset("appendixA")
        records, _ = gen_synthetic_federation(truth, 80, RngHandle(seed=4))
        pop = ClientPopulation(records)
        cfg = cfg_for(3)
        via_round = em_round(pop, truth, cfg, RngHandle(seed=99))
        via_batch = theorem1_update(pop, truth, cfg)
        np.testing.assert_array_equal(via_round.alphas, via_batch.alphas)
        np.testing.assert_array_equal(via_round.weights, via_batch.weights)
        assert via_round.count_dists == via_batch.count_dists

    def test_subsampled_cohort_support(self):
        # with a one-client cohort the new count distribution is that
        # client's n alone
        records = [
            ClientRecord(counts=np.array([2, 2]), n=4),
            ClientRecord(counts=np.array([3, 3]), n=6),
        ]
        pop = ClientPopulation(records)
        params = MdmParams(
            weights=[1.0], alphas=[[1.0, 1.0]], count_dists=({4: 0.5, 6: 0.5},)
        )
        out = em_round(pop, params, cfg_for(1, em_cohort_size=1), RngHandle(seed=0))
        assert set(out.count_dists[0]) in ({4}, {6})

    def test_monotone_loglik_on_full_cohorts(self):
        truth = get_preset("table1:medium:2")
        records, _ = gen_synthetic_federation(truth, 100, RngHandle(seed=6))
        pop = ClientPopulation(records)
        params, trace = fit(pop, cfg_for(2, rounds=10, track_loglik=True), RngHandle(seed=7))
        history = np.array(trace.loglik_history)
        assert np.all(np.diff(history) >= -1e-8)


class TestFitAndTrace:
    def test_zero_rounds_returns_init(self):
        truth = get_preset("appendixA")
        records, _ = gen_synthetic_federation(truth, 30, RngHandle(seed=8))
        pop = ClientPopulation(records)
        from mdmsim.inference import init_params

        params, trace = fit(pop, cfg_for(3, rounds=0), RngHandle(seed=9))
        direct = init_params(pop, cfg_for(3), RngHandle(seed=9).child(0))
        np.testing.assert_array_equal(params.alphas, direct.alphas)
        assert len(trace.params_history) == 1
        assert trace.loglik_history is None

    def test_trace_layout(self):
        truth = get_preset("appendixA")
        records, _ = gen_synthetic_federation(truth, 30, RngHandle(seed=8))
        pop = ClientPopulation(records)
        params, trace = fit(pop, cfg_for(2, rounds=5, track_loglik=True), RngHandle(seed=10))
        assert len(trace.params_history) == 6
        assert len(trace.loglik_history) == 6
        assert trace.n_rounds_run == 5
        assert trace.params_history[-1] is params
        assert trace.loglik_history[-1] == pytest.approx(
            log_likelihood(pop.records, params), rel=1e-12
        )

    def test_reproducible(self):
        truth = get_preset("appendixA")
        records, _ = gen_synthetic_federation(truth, 40, RngHandle(seed=11))
        pop = ClientPopulation(records)
        a, _ = fit(pop, cfg_for(2, rounds=4), RngHandle(seed=12))
        b, _ = fit(pop, cfg_for(2, rounds=4), RngHandle(seed=12))
        np.testing.assert_array_equal(a.alphas, b.alphas)

    def test_early_stop_shortens_run(self):
        truth = get_preset("table1:low:1")
        records, _ = gen_synthetic_federation(truth, 50, RngHandle(seed=21))
        pop = ClientPopulation(records)
        cfg = cfg_for(1, rounds=500, early_stop_tol=1e-6, early_stop_patience=3)
        params, trace = fit(pop, cfg, RngHandle(seed=13))
        assert trace.n_rounds_run < 500
        assert len(trace.loglik_history) == trace.n_rounds_run + 1

    def test_round_stream_schedule(self):
        # round t must draw its cohort from rng.child(t + 1); replay round 1
        # by hand from the recorded init and compare bitwise
        truth = get_preset("appendixA")
        records, _ = gen_synthetic_federation(truth, 50, RngHandle(seed=14))
        pop = ClientPopulation(records)
        cfg = cfg_for(1, rounds=2, em_cohort_size=5)
        handle = RngHandle(seed=15)
        _, trace = fit(pop, cfg, handle)
        replayed = em_round(pop, trace.params_history[0], cfg, handle.child(1))
        np.testing.assert_array_equal(replayed.alphas, trace.params_history[1].alphas)
        replayed2 = em_round(pop, trace.params_history[1], cfg, handle.child(2))
        np.testing.assert_array_equal(replayed2.alphas, trace.params_history[2].alphas)
