import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_pd, random_ws
from statbeam.channel import BeamformerSet, link_statistics
from statbeam.montecarlo import (
    BLOCK_SIZE,
    EmpiricalCdf,
    MonteCarloError,
    _Moments,
    instantaneous_rates,
    ks_critical_value,
    mc_ergodic_rate,
    mc_ergodic_rate_factored,
    mc_quadratic_form_density,
    pairwise_reduce,
)
from statbeam.rates import ergodic_rate_m2, low_snr_rate


class TestMcErgodicRate:
    def test_zero_covariance(self, rng):
        est = mc_ergodic_rate([np.zeros((2, 2)), np.eye(2)], random_ws(2, rng), 0, 10.0,
                              samples=5000, seed=1)
        assert est.mean == 0.0 and est.stderr == 0.0

    def test_low_snr(self, rng):
        sigmas = [random_pd(2, rng), random_pd(2, rng)]
        ws = random_ws(2, rng)
        rho = 1e-4
        est = mc_ergodic_rate(sigmas, ws, 0, rho, samples=100_000, seed=2)
        low = low_snr_rate(link_statistics(sigmas[0], ws[0], ws[1]), rho)
        # Second-order bias is O(rho^2), far below the sampling error here.
        assert abs(est.mean - low) <= 3 * est.stderr

    def test_identity_matches_closed_form(self):
        ws = BeamformerSet(np.eye(2))
        est = mc_ergodic_rate([np.eye(2)] * 2, ws, 0, 10.0, samples=200_000, seed=3)
        closed = ergodic_rate_m2(np.eye(2), ws[0], ws[1], 10.0)
        assert abs(est.mean - closed) <= 3 * est.stderr

    def test_deterministic_across_workers(self, rng):
        sigmas = [random_pd(3, rng) for _ in range(3)]
        ws = random_ws(3, rng)
        n = 3 * BLOCK_SIZE + 17
        a = mc_ergodic_rate(sigmas, ws, 1, 5.0, samples=n, seed=11, workers=1)
        b = mc_ergodic_rate(sigmas, ws, 1, 5.0, samples=n, seed=11, workers=3)
        c = mc_ergodic_rate(sigmas, ws, 1, 5.0, samples=n, seed=11, workers=1)
        assert a == b == c
        assert a.samples == n

    def test_seed_changes_estimate(self, rng):
        sigmas = [random_pd(2, rng), random_pd(2, rng)]
        ws = random_ws(2, rng)
        a = mc_ergodic_rate(sigmas, ws, 0, 5.0, samples=2000, seed=1)
        b = mc_ergodic_rate(sigmas, ws, 0, 5.0, samples=2000, seed=2)
        assert a.mean != b.mean

    def test_stderr_is_sample_std_over_root_n(self, rng):
        sigmas = [random_pd(2, rng), random_pd(2, rng)]
        ws = random_ws(2, rng)
        n = 2 * BLOCK_SIZE + 5
        est = mc_ergodic_rate(sigmas, ws, 0, 5.0, samples=n, seed=4)
        # Rebuild the same draws block by block from the documented streams.
        from statbeam.montecarlo import _block_sizes, _complex_gaussian, block_stream

        root_t = sigmas[0].sqrt.T
        vals = np.concatenate([
            instantaneous_rates(_complex_gaussian(block_stream(4, 0, b), (m, 2)) @ root_t,
                                ws.matrix, 0, 5.0)
            for b, m in enumerate(_block_sizes(n))
        ])
        np.testing.assert_allclose(est.mean, vals.mean(), rtol=1e-12)
        np.testing.assert_allclose(est.stderr, vals.std(ddof=1) / math.sqrt(n), rtol=1e-10)

    def test_stderr_scaling(self, rng):
        sigmas = [random_pd(2, rng), random_pd(2, rng)]
        ws = random_ws(2, rng)
        ratios = []
        for seed in range(5):
            small = mc_ergodic_rate(sigmas, ws, 0, 10.0, samples=20_000, seed=seed)
            large = mc_ergodic_rate(sigmas, ws, 0, 10.0, samples=80_000, seed=100 + seed)
            ratios.append(large.stderr / small.stderr)
        assert all(abs(r - 0.5) <= 0.1 for r in ratios)

    def test_too_few_samples(self, rng):
        with pytest.raises(MonteCarloError):
            mc_ergodic_rate([np.eye(2)] * 2, random_ws(2, rng), 0, 1.0, samples=999, seed=0)
        with pytest.raises(MonteCarloError):
            mc_ergodic_rate_factored([np.eye(2)] * 2, random_ws(2, rng), 0, 1.0, samples=10, seed=0)

    def test_bad_rho(self, rng):
        with pytest.raises(MonteCarloError):
            mc_ergodic_rate([np.eye(2)] * 2, random_ws(2, rng), 0, 0.0, samples=1000, seed=0)

    def test_factored_estimator_agrees(self, rng):
        sigmas = [random_pd(3, rng) for _ in range(3)]
        ws = random_ws(3, rng)
        direct = mc_ergodic_rate(sigmas, ws, 2, 8.0, samples=200_000, seed=21)
        factored = mc_ergodic_rate_factored(sigmas, ws, 2, 8.0, samples=200_000, seed=22)
        spread = math.hypot(direct.stderr, factored.stderr)
        assert abs(direct.mean - factored.mean) <= 4 * spread


class TestInstantaneousRates:
    def test_matches_definition(self, rng):
        h = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
        w = random_ws(3, rng).matrix
        rho = 6.0
        out = instantaneous_rates(h, w, 1, rho)
        for n in range(4):
            g = [abs(np.vdot(h[n], w[:, k])) ** 2 for k in range(3)]
            ref = math.log(1 + rho / 3 * g[1] / (1 + rho / 3 * (g[0] + g[2])))
            np.testing.assert_allclose(out[n], ref, rtol=1e-13)


class TestPairwiseReduce:
    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(1, 50), min_size=1, max_size=12), st.integers(0, 2**31))
    def test_matches_numpy(self, sizes, seed):
        rng = np.random.default_rng(seed)
        chunks = [rng.normal(3.0, 2.0, n) for n in sizes]
        total = pairwise_reduce([_Moments.of(c) for c in chunks])
        allv = np.concatenate(chunks)
        assert total.n == allv.size
        np.testing.assert_allclose(total.mean, allv.mean(), rtol=1e-12)
        np.testing.assert_allclose(total.m2, np.sum((allv - allv.mean()) ** 2), rtol=1e-10, atol=1e-10)

    def test_empty(self):
        with pytest.raises(MonteCarloError):
            pairwise_reduce([])


class TestQuadraticFormDensity:
    def test_flat_spectrum(self):
        cdf = mc_quadratic_form_density([1.0, 1.0], 10_000, seed=0)
        np.testing.assert_allclose(cdf.values, 1.0, rtol=1e-14)

    def test_uniform_two_user(self):
        n = 100_000
        cdf = mc_quadratic_form_density([2.0, 1.0], n, seed=5)
        assert cdf.ks_uniform(1.0, 2.0) <= 1.63 / math.sqrt(n)

    def test_three_eigenvalue_support_not_uniform(self):
        cdf = mc_quadratic_form_density([3.0, 2.0, 1.0], 50_000, seed=6)
        lo, hi = cdf.support
        assert 1.0 - 1e-12 <= lo and hi <= 3.0 + 1e-12
        assert cdf.ks_uniform(1.0, 3.0) > ks_critical_value(50_000)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31))
    def test_support(self, seed):
        rng = np.random.default_rng(seed)
        lam = np.sort(rng.uniform(0, 5, int(rng.integers(2, 6))))[::-1]
        cdf = mc_quadratic_form_density(lam, 10_000, seed)
        lo, hi = cdf.support
        assert lam[-1] - 1e-12 <= lo and hi <= lam[0] + 1e-12

    def test_errors(self):
        with pytest.raises(MonteCarloError):
            mc_quadratic_form_density([0.0, 0.0], 10_000, 0)
        with pytest.raises(MonteCarloError):
            mc_quadratic_form_density([2.0, 1.0], 9_999, 0)
        with pytest.raises(MonteCarloError):
            mc_quadratic_form_density([2.0], 10_000, 0)
        with pytest.raises(MonteCarloError):
            mc_quadratic_form_density([2.0, -1.0], 10_000, 0)

    def test_deterministic(self):
        a = mc_quadratic_form_density([2.0, 1.0], 40_000, 9)
        b = mc_quadratic_form_density([2.0, 1.0], 40_000, 9)
        np.testing.assert_array_equal(a.values, b.values)


class TestEmpiricalCdf:
    def test_ks_distance_small_sample(self):
        cdf = EmpiricalCdf([0.1, 0.4, 0.9])
        # Largest gap between the empirical steps and the U[0, 1] CDF.
        ref = max(1 / 3 - 0.1, 0.1 - 0, 2 / 3 - 0.4, 0.4 - 1 / 3, 1 - 0.9, 0.9 - 2 / 3)
        np.testing.assert_allclose(cdf.ks_uniform(0.0, 1.0), ref, rtol=1e-14)

    def test_call(self):
        cdf = EmpiricalCdf([3.0, 1.0, 2.0])
        np.testing.assert_allclose(cdf([0.5, 1.0, 2.5, 3.0]), [0, 1 / 3, 2 / 3, 1])
        assert len(cdf) == 3

    def test_critical_value(self):
        np.testing.assert_allclose(ks_critical_value(1), math.sqrt(-0.5 * math.log(0.005)))
        assert abs(ks_critical_value(100_000) * math.sqrt(100_000) - 1.63) < 0.01
