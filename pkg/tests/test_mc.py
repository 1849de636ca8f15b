"""Monte-Carlo estimators: calibration, activation checks, determinism."""

import math
import os

import numpy as np
import pytest

from mmicap import (
    ChannelParams,
    ConfigError,
    CovarianceMatrix,
    DeltaOutOfRange,
    MCConfig,
    NumericalUnderflow,
    WeightMatrix,
    bijective_channel,
    build_optimal_weights,
    decompose_covariance,
    delta_bound,
    estimate_entropy,
    estimate_mi,
    exact_linear_mi,
    g_bound,
    linear_channel,
    mmi_fc,
    relu_channel,
    sample_gaussian_inputs,
    verify_entropy_ordering,
    verify_relu_theorem,
)


def normal_cdf(x):
    """Independent standard normal CDF via the error function."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def random_cov(rng, dim, jitter=0.2):
    b = rng.standard_normal((dim, dim))
    return CovarianceMatrix(b @ b.T + jitter * np.eye(dim))


class TestSampling:
    def test_identity_moments(self):
        cov = CovarianceMatrix(np.eye(2))
        x = sample_gaussian_inputs(cov, 100_000, seed=0)
        sample_cov = x.T @ x / x.shape[0]
        assert np.max(np.abs(sample_cov - np.eye(2))) < 0.05

    def test_single_draw(self):
        x = sample_gaussian_inputs(CovarianceMatrix(np.eye(3)), 1, seed=1)
        assert x.shape == (1, 3) and np.all(np.isfinite(x))

    def test_diagonal_variances(self):
        cov = CovarianceMatrix(np.diag([4.0, 1.0]))
        x = sample_gaussian_inputs(cov, 100_000, seed=2)
        variances = x.var(axis=0)
        assert abs(variances[0] - 4.0) < 0.2
        assert abs(variances[1] - 1.0) < 0.05

    def test_deterministic(self):
        cov = CovarianceMatrix(np.diag([2.0, 1.0]))
        np.testing.assert_array_equal(
            sample_gaussian_inputs(cov, 50, seed=9),
            sample_gaussian_inputs(cov, 50, seed=9))


class TestEstimateEntropy:
    def test_pure_noise_entropy(self):
        # W = 0: the output is exactly N(b, s Id), entropy (d/2) log(2 pi e s)
        cov = CovarianceMatrix(np.eye(2))
        channel = linear_channel(WeightMatrix(np.zeros((2, 2))), np.zeros(2), 1.0)
        est = estimate_entropy(channel, cov, MCConfig(4000, 4000, seed=5))
        expected = math.log(2.0 * math.pi * math.e)
        assert abs(est.value - expected) <= 3.0 * est.std_error

    def test_bias_shift_invariance(self):
        cov = CovarianceMatrix(np.diag([2.0, 1.0]))
        w = WeightMatrix([[1.0, 0.0], [0.0, 1.0]])
        a = estimate_entropy(linear_channel(w, np.zeros(2), 1.0), cov,
                             MCConfig(2000, 2000, seed=6))
        b = estimate_entropy(linear_channel(w, np.array([5.0, -3.0]), 1.0), cov,
                             MCConfig(2000, 2000, seed=6))
        assert a.value == pytest.approx(b.value, abs=1e-9)

    def test_underflow_flagged(self):
        cov = CovarianceMatrix(np.eye(2))
        channel = linear_channel(WeightMatrix(np.eye(2)), np.zeros(2), 1e-30)
        with pytest.raises(NumericalUnderflow):
            estimate_entropy(channel, cov, MCConfig(100, 100, seed=7))

    def test_config_minimums(self):
        with pytest.raises(ConfigError):
            MCConfig(50, 4000, seed=0)
        with pytest.raises(ConfigError):
            MCConfig(4000, 99, seed=0)


class TestEstimateMi:
    def test_zero_weights(self):
        cov = CovarianceMatrix(np.eye(2))
        channel = linear_channel(WeightMatrix(np.zeros((2, 2))), np.zeros(2), 1.0)
        est = estimate_mi(channel, cov, MCConfig(2000, 2000, seed=8))
        assert abs(est.value) <= 3.0 * est.std_error

    def test_scalar_closed_form(self):
        channel = linear_channel(WeightMatrix([[1.0]]), np.zeros(1), 1.0)
        est = estimate_mi(channel, CovarianceMatrix([[3.0]]), MCConfig(8000, 8000, seed=9))
        assert abs(est.value - math.log(2.0)) <= 3.0 * est.std_error

    def test_calibration_against_exact_mi(self):
        # moderate-MI channels: the regime every stochastic check runs in;
        # at high MI in high dimension the mixture components separate and
        # the plug-in needs far more inner samples than any suite uses
        rng = np.random.default_rng(10)
        for i in range(20):
            n0, n1 = int(rng.integers(1, 7)), int(rng.integers(1, 7))
            cov = random_cov(rng, n0)
            raw = rng.standard_normal((n1, n0)) * 0.7
            bias = rng.uniform(-1, 1, size=n1)
            noise_var = float(rng.choice([0.5, 1.0, 2.0]))
            while exact_linear_mi(WeightMatrix(raw), cov, noise_var) > 4.0:
                raw = raw * 0.7
            w = WeightMatrix(raw)
            channel = linear_channel(w, bias, noise_var)
            exact = exact_linear_mi(w, cov, noise_var)
            est = estimate_mi(channel, cov, MCConfig(2500, 6000, seed=100 + i))
            assert abs(est.value - exact) <= 3.0 * max(est.std_error, 1e-4)

    def test_relu_large_bias_near_closed_form(self):
        cov = CovarianceMatrix(np.diag([2.0, 1.0]))
        dec = decompose_covariance(cov)
        w = build_optimal_weights(2.5, dec, 1.0, 2)
        channel = relu_channel(w, np.array([8.0, 8.0]), 1.0)
        est = estimate_mi(channel, cov, MCConfig(20_000, 20_000, seed=11))
        assert abs(est.value - 1.0397207708399179) <= 0.02

    def test_estimator_consistency_in_inner_samples(self):
        cov = CovarianceMatrix(np.diag([2.0, 1.0]))
        w = WeightMatrix([[0.8, 0.1], [0.0, 0.6]])
        channel = linear_channel(w, np.zeros(2), 1.0)
        small = estimate_entropy(channel, cov, MCConfig(2000, 2000, seed=12))
        large = estimate_entropy(channel, cov, MCConfig(2000, 4000, seed=12))
        assert abs(large.value - small.value) <= 3.0 * small.std_error


class TestDeltaBound:
    def test_large_bias_vanishes(self):
        cov = CovarianceMatrix(np.diag([2.0, 1.0]))
        w = WeightMatrix(np.eye(2))
        assert delta_bound(relu_channel(w, np.array([1e9, 1e9]), 1.0), cov) == 0.0

    def test_zero_bias_scalar(self):
        # unit pre-activation variance, zero bias: Phi(0) = 1/2 exactly
        cov = CovarianceMatrix([[1.0]])
        w = WeightMatrix([[1.0]])
        assert delta_bound(relu_channel(w, np.zeros(1), 1.0), cov) == 0.5

    def test_optimal_weights_value(self):
        cov = CovarianceMatrix(np.diag([2.0, 1.0]))
        dec = decompose_covariance(cov)
        w = build_optimal_weights(2.5, dec, 1.0, 2)
        bound = delta_bound(relu_channel(w, np.array([8.0, 8.0]), 1.0), cov)
        # pre-activation variances are 1.5*2 and 1.0*1
        expected = normal_cdf(-8.0 / math.sqrt(3.0)) + normal_cdf(-8.0)
        assert bound == pytest.approx(expected, rel=1e-12)
        assert bound < 1e-5

    def test_zero_rows(self):
        cov = CovarianceMatrix(np.eye(2))
        w = WeightMatrix(np.zeros((2, 2)))
        assert delta_bound(relu_channel(w, np.array([1.0, 0.0]), 1.0), cov) == 0.0
        assert delta_bound(relu_channel(w, np.array([-0.1, 1.0]), 1.0), cov) == 1.0

    def test_clamped_to_one(self):
        cov = CovarianceMatrix(np.eye(3))
        w = WeightMatrix(np.eye(3))
        bound = delta_bound(relu_channel(w, np.full(3, -9.0), 1.0), cov)
        assert bound == 1.0

    def test_requires_relu(self):
        cov = CovarianceMatrix(np.eye(2))
        with pytest.raises(ConfigError):
            delta_bound(linear_channel(WeightMatrix(np.eye(2)), np.zeros(2), 1.0), cov)


class TestGBound:
    def test_zero(self):
        assert g_bound(0.0, 1.0, 3) == 0.0

    def test_hand_value(self):
        # M = 1 at noise_var = 1/(2 pi), one output coordinate
        expected = 0.4 * abs(math.log(0.2)) + 2.0 * (
            -0.1 * math.log(0.1) - 0.9 * math.log(0.9))
        assert abs(g_bound(0.1, 1.0 / (2.0 * math.pi), 1) - expected) <= 1e-9

    def test_small_noise_constant(self):
        delta, noise_var, dim = 0.05, 0.01, 2
        m_const = (2.0 * math.pi * noise_var) ** (-1.0)
        expected = (4 * delta * abs(math.log(2 * delta))
                    + 2 * delta * math.log(m_const)
                    + 2 * (-delta * math.log(delta) - 0.95 * math.log(0.95)))
        assert g_bound(delta, noise_var, dim) == pytest.approx(expected, rel=1e-12)

    def test_rejects_out_of_range(self):
        with pytest.raises(DeltaOutOfRange):
            g_bound(0.4, 1.0, 1)
        with pytest.raises(DeltaOutOfRange):
            g_bound(1.0 / math.e, 1.0, 1)
        with pytest.raises(DeltaOutOfRange):
            g_bound(-0.01, 1.0, 1)

    def test_monotone_and_vanishing(self):
        # with M = 1 the bound peaks at delta ~ 0.2885 and dips before 0.3,
        # so monotonicity is asserted on [0, 0.28] where it provably holds
        grid = np.linspace(1e-12, 0.28, 200)
        values = [g_bound(float(d), 1.0, 2) for d in grid]
        assert np.all(np.diff(values) > 0)
        assert values[0] < 1e-9


class TestBijective:
    def test_tanh_invariance(self):
        rng = np.random.default_rng(13)
        for i in range(3):
            cov = random_cov(rng, 3)
            w = WeightMatrix(rng.standard_normal((2, 3)) * 0.8)
            bias = rng.uniform(-0.5, 0.5, size=2)
            lin = estimate_mi(linear_channel(w, bias, 1.0), cov,
                              MCConfig(3000, 3000, seed=200 + i))
            bij = estimate_mi(bijective_channel(w, bias, 1.0), cov,
                              MCConfig(3000, 3000, seed=300 + i))
            spread = 3.0 * math.hypot(lin.std_error, bij.std_error)
            assert abs(lin.value - bij.value) <= spread

    def test_tanh_entropy_carries_jacobian(self):
        # tanh contracts, so the post-activation entropy must drop
        cov = CovarianceMatrix(np.diag([2.0, 1.0]))
        w = WeightMatrix([[1.0, 0.0], [0.0, 1.0]])
        mc = MCConfig(3000, 3000, seed=14)
        pre = estimate_entropy(linear_channel(w, np.zeros(2), 1.0), cov, mc)
        post = estimate_entropy(bijective_channel(w, np.zeros(2), 1.0), cov, mc)
        assert post.value < pre.value


class TestEntropyOrdering:
    def test_zero_channel_coincides(self):
        cov = CovarianceMatrix(np.eye(2))
        model = relu_channel(WeightMatrix(np.zeros((2, 2))), np.zeros(2), 1.0)
        report = verify_entropy_ordering(model, cov, MCConfig(1000, 1000, seed=15))
        assert report["pass"]
        assert report["rows"][0]["difference"] == 0.0

    def test_random_instances(self):
        rng = np.random.default_rng(16)
        for i in range(8):
            cov = random_cov(rng, 3)
            model = relu_channel(WeightMatrix(rng.standard_normal((2, 3))),
                                 rng.uniform(-2, 2, size=2), 1.0)
            report = verify_entropy_ordering(model, cov, MCConfig(2000, 2000, seed=400 + i))
            assert report["pass"]

    def test_saturating_bias_drops_to_noise_entropy(self):
        cov = CovarianceMatrix(np.diag([2.0, 1.0]))
        model = relu_channel(WeightMatrix(np.eye(2)), np.array([-5.0, -5.0]), 1.0)
        report = verify_entropy_ordering(model, cov, MCConfig(4000, 4000, seed=17))
        row = report["rows"][0]
        noise_entropy = math.log(2.0 * math.pi * math.e)
        assert abs(row["h_relu"] - noise_entropy) < 0.05
        assert row["h_relu"] < row["h_linear"] - 0.3
        assert report["pass"]


class TestReluTheoremReport:
    def test_report_schema_and_pass(self):
        cov = CovarianceMatrix(np.diag([2.0, 1.0]))
        report = verify_relu_theorem(2.5, cov, 1.0, 2, [2.0, 4.0, 8.0],
                                     MCConfig(2000, 2000, seed=18))
        assert report["theorem"] == "relu-large-bias-convergence"
        assert isinstance(report["pass"], bool)
        assert len(report["rows"]) == 3
        for row in report["rows"]:
            assert set(row) == {"scale", "delta_bound", "g_bound", "mi_estimate",
                                "std_error", "closed_form", "gap"}
        assert report["pass"]

    def test_zero_budget_all_gaps_zero(self):
        cov = CovarianceMatrix(np.diag([2.0, 1.0]))
        report = verify_relu_theorem(0.0, cov, 1.0, 2, [2.0, 4.0],
                                     MCConfig(1000, 1000, seed=19))
        for row in report["rows"]:
            assert row["closed_form"] == 0.0
            assert abs(row["gap"]) <= 3.0 * max(row["std_error"], 1e-9)

    def test_monotone_gap_on_wider_setup(self):
        rng = np.random.default_rng(20)
        cov = random_cov(rng, 4)
        report = verify_relu_theorem(3.0, cov, 1.0, 3, [1.0, 2.0, 4.0, 8.0],
                                     MCConfig(2000, 2000, seed=21))
        assert report["pass"]


class TestDeterminism:
    def test_bit_identical_across_thread_counts(self):
        cov = CovarianceMatrix(np.diag([2.0, 1.0]))
        w = WeightMatrix([[0.9, 0.1], [0.2, 0.5]])
        channel = relu_channel(w, np.array([0.3, -0.2]), 1.0)
        mc = MCConfig(1500, 1500, seed=22)
        results = []
        original = os.environ.get("MMI_THREADS")
        try:
            for threads in ("1", "2", "7"):
                os.environ["MMI_THREADS"] = threads
                est = estimate_mi(channel, cov, mc)
                results.append((est.value, est.std_error))
        finally:
            if original is None:
                os.environ.pop("MMI_THREADS", None)
            else:
                os.environ["MMI_THREADS"] = original
        assert results[0] == results[1] == results[2]

    def test_invalid_thread_env(self):
        cov = CovarianceMatrix(np.eye(2))
        channel = linear_channel(WeightMatrix(np.eye(2)), np.zeros(2), 1.0)
        original = os.environ.get("MMI_THREADS")
        os.environ["MMI_THREADS"] = "many"
        try:
            with pytest.raises(ConfigError):
                estimate_entropy(channel, cov, MCConfig(200, 200, seed=23))
        finally:
            if original is None:
                os.environ.pop("MMI_THREADS", None)
            else:
                os.environ["MMI_THREADS"] = original


class TestReluMatchesClosedFormSpectrum:
    def test_closed_form_is_activation_blind(self):
        # the closed form the relu suite compares against is the linear one
        cov = CovarianceMatrix(np.diag([3.0, 1.5, 0.5]))
        dec = decompose_covariance(cov)
        closed = mmi_fc(ChannelParams(1.0, 2.0), dec.spectrum, 3, 2)
        w = build_optimal_weights(2.0, dec, 1.0, 2)
        assert exact_linear_mi(w, cov, 1.0) == pytest.approx(closed.nats, abs=1e-9)
