# ABOUTME: Tests for the SSIM, confidence and depth-consistency maps and the label filter.
# ABOUTME: Covers threshold semantics, occlusion bypass, monotonicity and per-pixel explanations.

import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from flowfactory.flowgen import FlowField, OcclusionMask, ReprojectionMaps
from flowfactory.masks import (
    CredibilityMaps,
    FilterConfig,
    depth_consistency_mask,
    explain_pixel,
    filter_label,
    find_violations,
    rfc_from_profile,
    rfc_mask,
    ssim_mask,
)
from flowfactory.render import RenderedView, WeightProfile

SHAPE = (4, 5)


def profile(boundaries, weights):
    weights = np.array(weights, float)
    return WeightProfile(np.array(boundaries, float), np.zeros_like(weights), weights, np.ones_like(weights))


def uniform_maps(conf=0.0, ssim=0.0, dc=0.0, shape=SHAPE):
    return CredibilityMaps(np.full(shape, ssim), np.full(shape, conf), np.full(shape, dc))


def single_pixel(conf, ssim, dc, occluded=False, valid=True, cfg=None):
    label = filter_label(
        FlowField.zeros((1, 1), valid=valid),
        uniform_maps(conf, ssim, dc, (1, 1)),
        OcclusionMask.from_ao(np.full((1, 1), 1.0 if occluded else 0.0)),
        cfg,
    )
    return bool(label.supervision_mask[0, 0])


class TestSSIM(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(1)
        self.a = rng.uniform(size=(32, 32, 3))
        self.b = np.clip(self.a + rng.normal(0, 0.1, self.a.shape), 0, 1)

    def test_identical_images(self):
        assert_array_equal(ssim_mask(self.a, self.a), 0.0)

    def test_symmetric(self):
        assert_array_equal(ssim_mask(self.a, self.b), ssim_mask(self.b, self.a))

    def test_range_and_dissimilar_constants(self):
        m = ssim_mask(np.full((16, 16), 0.2), np.full((16, 16), 0.8))
        self.assertTrue(np.all(m > 0.5))
        m = ssim_mask(self.a, self.b)
        self.assertTrue(np.all((m >= 0) & (m <= 1)))

    def test_invalid_samples_spread_over_window(self):
        valid = np.ones((32, 32), bool)
        valid[12, 12] = False
        m = ssim_mask(self.a, self.b, valid)
        self.assertTrue(np.isnan(m[7, 17]))
        self.assertTrue(np.isnan(m[12, 12]))
        self.assertTrue(np.isfinite(m[6, 12]))
        self.assertTrue(np.isfinite(m[12, 18]))

    def test_shape_mismatch(self):
        with self.assertRaises(ValueError):
            ssim_mask(self.a, self.a[:, :, :2])


class TestConfidence(unittest.TestCase):
    def test_uniform_cdf(self):
        self.assertAlmostEqual(rfc_from_profile(profile([1.0, 3.0], [1.0])), 0.4, delta=1e-9)

    def test_concentrated_weight(self):
        self.assertLess(rfc_from_profile(profile([0.0, 3.99, 4.01, 10.0], [0.0, 1.0, 0.0])), 0.05)

    def test_low_weight_is_undefined(self):
        self.assertTrue(np.isnan(rfc_from_profile(profile([1.0, 3.0], [0.3]))))

    def test_view_map_and_quantile_check(self):
        view = RenderedView(
            rgb=np.zeros((1, 2, 3)),
            midpoint_depth=np.array([[2.0, np.nan]]),
            expected_depth=np.array([[2.0, np.nan]]),
            weight_quantile_lo=np.array([[1.2, np.nan]]),
            weight_quantile_hi=np.array([[2.8, np.nan]]),
            total_weight=np.array([[1.0, 0.1]]),
        )
        m = rfc_mask(view)
        self.assertAlmostEqual(m[0, 0], 0.4)
        self.assertTrue(np.isnan(m[0, 1]))
        with self.assertRaises(ValueError):
            rfc_mask(view, 0.2, 0.8)

    def test_scaling_depths_leaves_value_unchanged(self):
        rng = np.random.default_rng(5)
        boundaries = np.sort(rng.uniform(1.0, 9.0, (20, 33)), axis=-1)
        weights = rng.dirichlet(np.ones(32), 20)
        base = rfc_from_profile(profile(boundaries, weights))
        self.assertTrue(np.all(np.isfinite(base)))
        for k in (0.25, 2.0, 1024.0):
            assert_array_equal(rfc_from_profile(profile(boundaries * k, weights)), base)
        assert_allclose(rfc_from_profile(profile(boundaries * 3.7, weights)), base, rtol=1e-12)

    def test_spreading_weight_over_two_intervals_raises_value(self):
        boundaries = np.arange(1.0, 12.0)
        for i in range(10):
            one = np.zeros(10)
            one[i] = 1.0
            single = rfc_from_profile(profile(boundaries, one))
            for j in range(i + 2, 10):
                spread = np.zeros(10)
                spread[i] = spread[j] = 0.5
                self.assertGreater(rfc_from_profile(profile(boundaries, spread)), single)


class TestDepthConsistency(unittest.TestCase):
    def test_relative_difference(self):
        maps = ReprojectionMaps(
            np.zeros((1, 3, 2)), np.array([[10.0, 10.0, 10.0]]), np.array([[10.1, 10.5, np.nan]])
        )
        m = depth_consistency_mask(maps)
        self.assertAlmostEqual(m[0, 0], 0.1 / 20.1)
        self.assertAlmostEqual(m[0, 1], 0.5 / 20.5)
        self.assertTrue(np.isnan(m[0, 2]))

    def test_scaling_depths_leaves_value_unchanged(self):
        rng = np.random.default_rng(2)
        z_i = rng.uniform(2.0, 8.0, SHAPE)
        z_j = np.where(rng.uniform(size=SHAPE) < 0.2, np.nan, z_i * rng.uniform(0.9, 1.1, SHAPE))
        coords = np.zeros(SHAPE + (2,))
        base = depth_consistency_mask(ReprojectionMaps(coords, z_i, z_j))
        for k in (0.5, 8.0):
            scaled = depth_consistency_mask(ReprojectionMaps(coords, z_i * k, z_j * k))
            assert_array_equal(scaled, base)
        scaled = depth_consistency_mask(ReprojectionMaps(coords, z_i * 3.7, z_j * 3.7))
        assert_allclose(scaled, base, rtol=1e-12, atol=1e-14)


class TestFilterConfig(unittest.TestCase):
    def test_threshold_ranges(self):
        with self.assertRaises(ValueError):
            FilterConfig(th_conf=0.0)
        with self.assertRaises(ValueError):
            FilterConfig(th_dc=1.5)
        with self.assertRaises(ValueError):
            FilterConfig(th_low=0.9, th_high=0.1)
        with self.assertRaises(ValueError):
            FilterConfig(n_foreground=-1)

    def test_threshold_one_disables(self):
        self.assertFalse(FilterConfig(th_ssim=1.0).enabled("ssim"))
        self.assertFalse(FilterConfig(use_dc=False).enabled("dc"))
        self.assertTrue(FilterConfig().enabled("conf"))

    def test_dict_round_trip_and_unknown_keys(self):
        cfg = FilterConfig(th_dc=0.02, occlusion_as_filter=True)
        self.assertEqual(FilterConfig.from_dict(cfg.to_dict()), cfg)
        with self.assertRaises(ValueError):
            FilterConfig.from_dict({"th_dcc": 0.1})


class TestFilterLabel(unittest.TestCase):
    def test_all_criteria_pass(self):
        self.assertTrue(single_pixel(0.29, 0.05, 0.005))

    def test_threshold_is_strict(self):
        self.assertFalse(single_pixel(0.3, 0.05, 0.005))

    def test_occlusion_bypasses_ssim_only(self):
        self.assertTrue(single_pixel(0.1, 0.5, 0.005, occluded=True))
        self.assertFalse(single_pixel(0.1, 0.5, 0.005, occluded=False))
        self.assertFalse(single_pixel(0.5, 0.05, 0.005, occluded=True))

    def test_occlusion_as_hard_filter(self):
        cfg = FilterConfig(occlusion_as_filter=True)
        self.assertFalse(single_pixel(0.1, 0.05, 0.005, occluded=True, cfg=cfg))

    def test_undefined_map_and_invalid_flow_drop(self):
        self.assertFalse(single_pixel(0.1, 0.05, np.nan))
        self.assertFalse(single_pixel(0.1, 0.05, 0.005, valid=False))

    def test_disabled_criterion_ignored(self):
        self.assertTrue(single_pixel(0.1, 0.9, 0.005, cfg=FilterConfig(use_ssim=False)))

    def test_thresholds_at_one_keep_every_valid_pixel(self):
        rng = np.random.default_rng(0)
        cred = CredibilityMaps(*(np.where(rng.uniform(size=SHAPE) < 0.2, np.nan, rng.uniform(size=SHAPE)) for _ in range(3)))
        valid = rng.uniform(size=SHAPE) < 0.7
        cfg = FilterConfig(th_conf=1.0, th_ssim=1.0, th_dc=1.0)
        label = filter_label(FlowField.zeros(SHAPE).with_valid(valid), cred, OcclusionMask.clear(SHAPE), cfg)
        assert_array_equal(label.supervision_mask, valid)

    def test_tighter_thresholds_never_add_pixels(self):
        rng = np.random.default_rng(5)
        shape = (20, 20)
        cred = CredibilityMaps(*(rng.uniform(0, 0.4, shape) for _ in range(3)))
        flow = FlowField.zeros(shape).with_valid(rng.uniform(size=shape) < 0.9)
        occ = OcclusionMask.from_ao(rng.uniform(size=shape))
        for _ in range(50):
            loose = FilterConfig(**{k: float(rng.uniform(0.05, 1.0)) for k in ("th_conf", "th_ssim", "th_dc")})
            tight = loose.replace(**{k: float(rng.uniform(0.01, 1.0)) * loose.threshold(k[3:]) for k in ("th_conf", "th_ssim", "th_dc")})
            a = filter_label(flow, cred, occ, loose).supervision_mask
            b = filter_label(flow, cred, occ, tight).supervision_mask
            self.assertFalse(np.any(b & ~a))

    def test_counts(self):
        cred = uniform_maps(conf=0.1, ssim=0.5, dc=0.0)
        occ = OcclusionMask.from_ao(np.eye(4, 5))
        label = filter_label(FlowField.zeros(SHAPE), cred, occ)
        self.assertEqual(label.counts["total"], 20)
        self.assertEqual(label.counts["occluded"], 4)
        self.assertEqual(label.counts["retained"], 4)
        self.assertEqual(label.counts["fail"]["ssim"], 16)
        self.assertAlmostEqual(label.retained_fraction, 0.2)
        assert_array_equal(label.flow_gt.valid, np.eye(4, 5, dtype=bool))

    def test_shape_mismatch(self):
        with self.assertRaises(ValueError):
            filter_label(FlowField.zeros(SHAPE), uniform_maps(shape=(2, 2)), OcclusionMask.clear(SHAPE))


class TestAudit(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(2)
        self.cred = CredibilityMaps(*(rng.uniform(0, 0.4, SHAPE) for _ in range(3)))
        self.occ = OcclusionMask.from_ao(rng.uniform(size=SHAPE))
        self.flow = FlowField.zeros(SHAPE)
        self.cfg = FilterConfig()

    def test_filter_output_has_no_violations(self):
        label = filter_label(self.flow, self.cred, self.occ, self.cfg)
        self.assertEqual(find_violations(label.supervision_mask, self.flow.valid, self.cred, self.occ.occluded, self.cfg), [])

    def test_tampered_mask_is_caught(self):
        everything = np.ones(SHAPE, bool)
        label = filter_label(self.flow, self.cred, self.occ, self.cfg)
        bad = find_violations(everything, self.flow.valid, self.cred, self.occ.occluded, self.cfg)
        self.assertEqual(len(bad), int((~label.supervision_mask).sum()))

    def test_trusted_pixels_are_skipped(self):
        everything = np.ones(SHAPE, bool)
        self.assertEqual(find_violations(everything, self.flow.valid, self.cred, self.occ.occluded, self.cfg, everything), [])

    def test_explain_pixel(self):
        cred = uniform_maps(conf=0.4, ssim=0.05, dc=np.nan, shape=(1, 1))
        lines = explain_pixel(cred, False, True, FilterConfig(), 0, 0)
        self.assertIn("conf: fail: m_conf 0.4 ≥ 0.3", lines)
        self.assertIn("ssim: pass: m_ssim 0.05 < 0.1", lines)
        self.assertIn("dc: fail: m_dc undefined", lines)
        lines = explain_pixel(cred, True, True, FilterConfig(th_conf=1.0), 0, 0, trusted=True)
        self.assertIn("conf: pass: disabled", lines)
        self.assertIn("foreground: yes (label trusted)", lines)


if __name__ == "__main__":
    unittest.main()
