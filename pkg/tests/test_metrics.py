"""Normalized error metric and permutation alignment."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdmsim import (
    ContractError,
    DomainError,
    MdmParams,
    align_and_score,
    nmse,
)


class TestNmse:
    def test_exact_match_is_zero(self):
        assert nmse([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_worked_example(self):
        # relative errors (2-1)/1 = 1 and (2-2)/2 = 0, so the root of the
        # summed squares is 1
        assert nmse([2.0, 2.0], [1.0, 2.0]) == pytest.approx(1.0, abs=1e-15)

    def test_uniform_relative_inflation(self):
        # y scaled by 1.1 everywhere: each term is 0.1^2, and ten of them
        # sum to 0.1
        y = np.arange(1.0, 11.0)
        assert nmse(1.1 * y, y) == pytest.approx(math.sqrt(0.1), rel=1e-12)

    def test_errors_accumulate_with_length(self):
        short = nmse([1.1], [1.0])
        long = nmse([1.1] * 4, [1.0] * 4)
        assert long == pytest.approx(2 * short, rel=1e-12)

    @given(
        st.lists(st.floats(0.1, 100.0), min_size=1, max_size=12),
        st.floats(0.1, 10.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_scale_invariance(self, ys, scale):
        y = np.asarray(ys)
        x = 1.3 * y
        assert nmse(scale * x, scale * y) == pytest.approx(nmse(x, y), rel=1e-9)

    def test_zero_reference_rejected(self):
        with pytest.raises(DomainError):
            nmse([1.0, 2.0], [1.0, 0.0])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ContractError):
            nmse([1.0, 2.0], [1.0])

    def test_empty_rejected(self):
        with pytest.raises(ContractError):
            nmse([], [])

    def test_matrix_input_flattened(self):
        x = np.array([[2.0, 2.0], [1.0, 2.0]])
        y = np.array([[1.0, 2.0], [1.0, 2.0]])
        assert nmse(x, y) == pytest.approx(1.0, abs=1e-15)


def make_params(weights, alphas, count_dists):
    return MdmParams(weights=weights, alphas=alphas, count_dists=count_dists)


TRUTH = make_params(
    weights=[0.2, 0.5, 0.3],
    alphas=[[0.1, 0.2, 0.3], [1.0, 4.0, 2.0], [10.0, 5.0, 3.0]],
    count_dists=({10: 1.0}, {10: 0.5, 20: 0.5}, {20: 1.0}),
)


class TestAlignAndScore:
    def test_identity_recovery(self):
        report = align_and_score(TRUTH, TRUTH)
        assert list(report.permutation) == [0, 1, 2]
        assert report.nmse_tau == 0.0
        assert report.nmse_alpha == 0.0
        assert report.nmse_pi == 0.0

    def test_shuffled_copy_recovered(self):
        shuffled = TRUTH.permuted([2, 0, 1])
        report = align_and_score(shuffled, TRUTH)
        aligned = shuffled.permuted(report.permutation)
        np.testing.assert_array_equal(aligned.alphas, TRUTH.alphas)
        np.testing.assert_array_equal(aligned.weights, TRUTH.weights)
        assert report.nmse_alpha == 0.0
        assert report.nmse_tau == 0.0
        assert report.nmse_pi == 0.0

    def test_invariant_to_fitted_permutation(self):
        fitted = make_params(
            weights=[0.25, 0.45, 0.3],
            alphas=[[0.12, 0.19, 0.31], [1.1, 3.9, 2.2], [9.0, 5.5, 2.8]],
            count_dists=({10: 1.0}, {10: 0.6, 20: 0.4}, {20: 1.0}),
        )
        base = align_and_score(fitted, TRUTH)
        spun = align_and_score(fitted.permuted([1, 2, 0]), TRUTH)
        assert spun.nmse_alpha == pytest.approx(base.nmse_alpha, rel=1e-12)
        assert spun.nmse_tau == pytest.approx(base.nmse_tau, rel=1e-12)
        assert spun.nmse_pi == pytest.approx(base.nmse_pi, rel=1e-12)

    def test_single_component_reduces_to_plain_nmse(self):
        truth = make_params([1.0], [[1.0, 2.0, 4.0]], ({5: 0.5, 6: 0.5},))
        fitted = make_params([1.0], [[1.2, 1.8, 4.4]], ({5: 0.25, 6: 0.75},))
        report = align_and_score(fitted, truth)
        assert report.nmse_alpha == pytest.approx(
            nmse([1.2, 1.8, 4.4], [1.0, 2.0, 4.0]), rel=1e-12
        )
        assert report.nmse_tau == 0.0
        assert report.nmse_pi == pytest.approx(
            nmse([0.25, 0.75], [0.5, 0.5]), rel=1e-12
        )

    def test_uniform_alpha_inflation_example(self):
        alpha = np.linspace(0.5, 5.0, 10)
        truth = make_params([1.0], [alpha], ({3: 1.0},))
        fitted = make_params([1.0], [1.1 * alpha], ({3: 1.0},))
        report = align_and_score(fitted, truth)
        assert report.nmse_alpha == pytest.approx(math.sqrt(0.1), rel=1e-12)

    def test_count_dist_errors_use_truth_support(self):
        # fitted mass on n=30 is outside the truth support and ignored;
        # fitted missing n=20 counts as zero against the truth value
        truth = make_params([1.0], [[1.0, 1.0]], ({10: 0.5, 20: 0.5},))
        fitted = make_params([1.0], [[1.0, 1.0]], ({10: 0.5, 30: 0.5},))
        report = align_and_score(fitted, truth)
        assert report.nmse_pi == pytest.approx(
            nmse([0.5, 0.0], [0.5, 0.5]), rel=1e-12
        )

    def test_alignment_minimizes_alpha_error(self):
        # tau would prefer the swapped match; alpha must win
        truth = make_params(
            [0.5, 0.5], [[1.0, 1.0], [10.0, 10.0]], ({5: 1.0}, {5: 1.0})
        )
        fitted = make_params(
            [0.1, 0.9], [[9.5, 9.5], [1.1, 1.1]], ({5: 1.0}, {5: 1.0})
        )
        report = align_and_score(fitted, truth)
        aligned = fitted.permuted(report.permutation)
        np.testing.assert_array_equal(aligned.alphas[0], [1.1, 1.1])
        np.testing.assert_array_equal(aligned.alphas[1], [9.5, 9.5])

    def test_component_count_mismatch_rejected(self):
        one = make_params([1.0], [[1.0, 1.0]], ({5: 1.0},))
        two = make_params([0.5, 0.5], [[1.0, 1.0], [2.0, 2.0]], ({5: 1.0}, {5: 1.0}))
        with pytest.raises(ContractError):
            align_and_score(one, two)

    def test_category_count_mismatch_rejected(self):
        a = make_params([1.0], [[1.0, 1.0]], ({5: 1.0},))
        b = make_params([1.0], [[1.0, 1.0, 1.0]], ({5: 1.0},))
        with pytest.raises(ContractError):
            align_and_score(a, b)

    def test_too_many_components_rejected(self):
        k = 9
        big = make_params(
            [1.0 / k] * k,
            [[1.0, 1.0]] * k,
            tuple({5: 1.0} for _ in range(k)),
        )
        with pytest.raises(ContractError):
            align_and_score(big, big)

    @given(st.permutations(list(range(4))))
    @settings(max_examples=24, deadline=None)
    def test_any_permutation_of_truth_scores_zero(self, order):
        truth = make_params(
            weights=[0.1, 0.2, 0.3, 0.4],
            alphas=[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]],
            count_dists=({1: 1.0}, {2: 1.0}, {3: 1.0}, {4: 1.0}),
        )
        report = align_and_score(truth.permuted(order), truth)
        assert report.nmse_alpha == 0.0
        assert report.nmse_tau == 0.0
        assert report.nmse_pi == 0.0
