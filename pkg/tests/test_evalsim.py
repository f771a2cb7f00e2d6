import math

import numpy as np
import pytest

from ballwise.evalsim import (
    GaussianFieldSampler,
    ScenarioConfig,
    cap_region_mask,
    compute_error_rates,
    gaussian_kernel_noise,
    multi_patch_mask,
    run_scenario,
)
from ballwise.mesh import build_icosphere

PATH_DISTANCES = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]])


class TestGaussianFieldSampler:
    def test_tiny_bandwidth_is_iid(self):
        s = GaussianFieldSampler(PATH_DISTANCES, bandwidth=1e-4, sd=2.0)
        cov = s.factor @ s.factor.T
        np.testing.assert_allclose(cov, 4.0 * np.eye(3), atol=1e-8)

    def test_huge_bandwidth_is_common_factor(self):
        s = GaussianFieldSampler(PATH_DISTANCES, bandwidth=1e4, sd=1.0)
        cov = s.factor @ s.factor.T
        np.testing.assert_allclose(cov, np.ones((3, 3)), atol=1e-6)

    def test_factor_reproduces_kernel(self):
        s = GaussianFieldSampler(PATH_DISTANCES, bandwidth=0.7, sd=1.3)
        expected = 1.3 ** 2 * np.exp(-PATH_DISTANCES ** 2 / (2 * 0.7 ** 2))
        np.testing.assert_allclose(s.factor @ s.factor.T, expected, atol=1e-10)

    def test_monte_carlo_covariance(self, triangle_strip):
        # 3-vertex sub-check on a real mesh: empirical covariance of 1e5
        # draws within 0.02 of the closed-form kernel
        draws = gaussian_kernel_noise(
            triangle_strip, bandwidth=1.0, sd=1.0, seed=123, n_draws=100_000
        )
        emp = np.cov(draws[:, :3].T)
        d = triangle_strip.distances[:3, :3]
        expected = np.exp(-(d ** 2) / 2.0)
        assert np.abs(emp - expected).max() < 0.02

    def test_zero_mean(self, triangle_strip):
        draws = gaussian_kernel_noise(
            triangle_strip, bandwidth=0.5, sd=1.0, seed=7, n_draws=50_000
        )
        assert np.abs(draws.mean(axis=0)).max() < 0.02

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            GaussianFieldSampler(PATH_DISTANCES, bandwidth=0.0, sd=1.0)
        with pytest.raises(ValueError):
            GaussianFieldSampler(PATH_DISTANCES, bandwidth=1.0, sd=-1.0)

    def test_size_limit(self):
        d = np.zeros((2001, 2001))
        with pytest.raises(ValueError, match="dense covariance"):
            GaussianFieldSampler(d, bandwidth=1.0, sd=1.0)

    def test_infinite_distances_rejected(self):
        d = PATH_DISTANCES.copy()
        d[0, 2] = d[2, 0] = np.inf
        with pytest.raises(ValueError, match="finite"):
            GaussianFieldSampler(d, bandwidth=1.0, sd=1.0)


class TestErrorRates:
    def test_reject_everything_truth_everything(self):
        rej = np.ones((1, 4), dtype=bool)
        truth = np.ones(4, dtype=bool)
        r = compute_error_rates(rej, truth, np.ones(4))
        assert r.sensitivity == 1.0
        assert r.fwer == 0.0
        assert r.false_positive_rate == 0.0
        assert r.false_discovery_rate == 0.0

    def test_reject_nothing(self):
        rej = np.zeros((3, 4), dtype=bool)
        truth = np.array([True, True, False, False])
        r = compute_error_rates(rej, truth, np.ones(4))
        assert r.sensitivity == 0.0
        assert r.fwer == 0.0
        assert r.false_positive_rate == 0.0
        assert r.false_discovery_rate == 0.0

    def test_direct_counting(self):
        # truth = {0, 1}, rejected = {1, 2}: half the truth found, one false
        # positive among two null vertices, half the rejections false
        rej = np.array([[False, True, True, False]])
        truth = np.array([True, True, False, False])
        r = compute_error_rates(rej, truth, np.ones(4))
        assert r.sensitivity == pytest.approx(0.5)
        assert r.fwer == 1.0
        assert r.false_positive_rate == pytest.approx(0.5)
        assert r.false_discovery_rate == pytest.approx(0.5)

    def test_weighted_denominators(self):
        rej = np.array([[True, False, True, False]])
        truth = np.array([True, True, False, False])
        w = np.array([3.0, 1.0, 1.0, 3.0])
        r = compute_error_rates(rej, truth, w)
        assert r.sensitivity == pytest.approx(3.0 / 4.0)
        assert r.false_positive_rate == pytest.approx(1.0 / 4.0)
        assert r.false_discovery_rate == pytest.approx(1.0 / 4.0)

    def test_global_null_sensitivity_none(self):
        rej = np.zeros((2, 3), dtype=bool)
        truth = np.zeros(3, dtype=bool)
        r = compute_error_rates(rej, truth, np.ones(3))
        assert r.sensitivity is None

    def test_fwer_at_least_fpr_positivity(self):
        rng = np.random.default_rng(0)
        rej = rng.random((20, 10)) < 0.3
        truth = np.zeros(10, dtype=bool)
        truth[:3] = True
        r = compute_error_rates(rej, truth, np.ones(10))
        assert (r.false_positive_rate > 0) <= (r.fwer > 0)


class TestTruthMasks:
    def test_cap_region_connected(self):
        m = build_icosphere(2).compute_distances()
        mask = cap_region_mask(m, 0, 0.9)
        assert mask[0]
        assert 1 < mask.sum() < m.n_vertices

    def test_multi_patch_union(self):
        m = build_icosphere(2).compute_distances()
        a = cap_region_mask(m, 0, 0.5)
        b = cap_region_mask(m, 11, 0.5)
        np.testing.assert_array_equal(multi_patch_mask(m, [0, 11], 0.5), a | b)


class TestRunScenario:
    def _base_cfg(self, **kwargs):
        defaults = dict(
            n_samples=8,
            n_permutations=20,
            replicates=3,
            seed=42,
            icosphere_order=1,
            noise_bandwidth=0.5,
            noise_sd=1.0,
        )
        defaults.update(kwargs)
        return ScenarioConfig(**defaults)

    def test_determinism(self):
        cfg = self._base_cfg()
        r1 = run_scenario(cfg)
        r2 = run_scenario(cfg)
        assert r1 == r2

    def test_global_null_reports_no_sensitivity(self):
        rates = run_scenario(self._base_cfg())
        assert rates.sensitivity is None
        assert 0.0 <= rates.fwer <= 1.0

    def test_separation_limit(self):
        # huge amplitude, cap below vertex spacing: every truth vertex found
        m = build_icosphere(1)
        m.compute_weights().compute_distances()
        truth = cap_region_mask(m, 0, 1.2)
        cfg = self._base_cfg(
            replicates=2,
            radius_cap=0.05,
            signal_amplitude=50.0,
            truth_mask=truth,
        )
        rates = run_scenario(cfg, mesh=m)
        assert rates.sensitivity == pytest.approx(1.0)

    def test_odd_samples_rejected(self):
        with pytest.raises(ValueError, match="even"):
            self._base_cfg(n_samples=7)

    def test_mask_shape_checked(self):
        cfg = self._base_cfg(truth_mask=np.zeros(5, dtype=bool))
        with pytest.raises(ValueError, match="truth_mask"):
            run_scenario(cfg)

    def test_masks_returned(self):
        cfg = self._base_cfg(replicates=2)
        rates, masks = run_scenario(cfg, return_masks=True)
        assert masks.shape == (2, 12)
        assert rates.n_replicates == 2
