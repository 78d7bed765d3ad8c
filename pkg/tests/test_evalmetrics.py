# ABOUTME: Tests for flow and depth-change metrics and the occlusion-masked zero-shot losses.
# ABOUTME: Hand-computed EPE/Fl-all cases, a brute-force cross-check and Mid_error constants.

import math
import unittest

import numpy as np

from flowfactory.evalmetrics import (
    DepthRatioReport,
    FlowMetricsReport,
    MetricError,
    depth_change_ratio,
    flow_epe_all,
    mean_reports,
    mid_error,
    zero_shot_losses,
)
from flowfactory.flowgen import FlowField, OcclusionMask

SHAPE = (8, 10)


def constant_flow(u, v=0.0, shape=SHAPE):
    return FlowField(np.full(shape, float(u)), np.full(shape, float(v)), np.ones(shape, bool))


class TestFlowMetrics(unittest.TestCase):
    def test_perfect_prediction(self):
        gt = constant_flow(3.0, -2.0)
        report = flow_epe_all(gt, gt)
        self.assertEqual(report.fl_epe, 0.0)
        self.assertEqual(report.fl_all, 0.0)
        self.assertEqual(report.pixel_count, 80)

    def test_large_motion_small_relative_error(self):
        report = flow_epe_all(constant_flow(104.0), constant_flow(100.0))
        self.assertAlmostEqual(report.fl_epe, 4.0)
        self.assertEqual(report.fl_all, 0.0)
        self.assertEqual(flow_epe_all(constant_flow(104.0), constant_flow(100.0), rule="or").fl_all, 100.0)

    def test_small_motion_outlier(self):
        self.assertEqual(flow_epe_all(constant_flow(14.0), constant_flow(10.0)).fl_all, 100.0)

    def test_mask_and_gt_validity(self):
        gt = constant_flow(0.0)
        gt = gt.with_valid(np.arange(80).reshape(SHAPE) % 2 == 0)
        mask = np.zeros(SHAPE, bool)
        mask[:4] = True
        report = flow_epe_all(constant_flow(1.0), gt, mask)
        self.assertEqual(report.pixel_count, 20)
        self.assertAlmostEqual(report.fl_epe, 1.0)

    def test_empty_mask(self):
        with self.assertRaises(MetricError):
            flow_epe_all(constant_flow(0.0), constant_flow(0.0), np.zeros(SHAPE, bool))

    def test_unknown_rule(self):
        with self.assertRaises(ValueError):
            flow_epe_all(constant_flow(0.0), constant_flow(0.0), rule="xor")

    def test_matches_brute_force(self):
        rng = np.random.default_rng(9)
        gt = FlowField(rng.normal(0, 20, (16, 16)), rng.normal(0, 20, (16, 16)), rng.uniform(size=(16, 16)) < 0.8)
        pred = FlowField(gt.u + rng.normal(0, 3, (16, 16)), gt.v + rng.normal(0, 3, (16, 16)), np.ones((16, 16), bool))
        errors, bad = [], 0
        for v in range(16):
            for u in range(16):
                if not gt.valid[v, u]:
                    continue
                err = math.hypot(pred.u[v, u] - gt.u[v, u], pred.v[v, u] - gt.v[v, u])
                errors.append(err)
                bad += err > 3.0 and err > 0.05 * math.hypot(gt.u[v, u], gt.v[v, u])
        report = flow_epe_all(pred, gt)
        self.assertAlmostEqual(report.fl_epe, sum(errors) / len(errors), places=12)
        self.assertAlmostEqual(report.fl_all, 100.0 * bad / len(errors), places=12)


class TestDepthMetrics(unittest.TestCase):
    def test_known_value(self):
        report = mid_error(np.full(SHAPE, 2.0), np.ones(SHAPE))
        self.assertAlmostEqual(report.mid_error, 6931.4718, delta=0.01)

    def test_symmetric_and_scale_invariant(self):
        rng = np.random.default_rng(4)
        a = rng.uniform(0.5, 2.0, SHAPE)
        b = rng.uniform(0.5, 2.0, SHAPE)
        self.assertAlmostEqual(mid_error(a, b).mid_error, mid_error(b, a).mid_error, places=9)
        self.assertAlmostEqual(mid_error(3 * a, 3 * b).mid_error, mid_error(a, b).mid_error, places=6)

    def test_non_positive_ratio(self):
        tau = np.ones(SHAPE)
        tau[0, 0] = -1.0
        with self.assertRaises(MetricError):
            mid_error(tau, np.ones(SHAPE))

    def test_undefined_pixels_are_skipped(self):
        gt = np.ones(SHAPE)
        gt[0] = np.nan
        self.assertEqual(mid_error(np.ones(SHAPE), gt).pixel_count, 70)

    def test_depth_change_ratio(self):
        tau = depth_change_ratio(np.array([2.0, np.nan, 0.0]), np.array([3.0, 1.0, 1.0]))
        self.assertEqual(tau[0], 1.5)
        self.assertTrue(np.isnan(tau[1:]).all())


class TestZeroShotLosses(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(6)
        self.image = rng.uniform(0.2, 0.7, (24, 24, 3))
        self.still = FlowField.zeros((24, 24))
        self.clear = OcclusionMask.clear((24, 24))

    def test_identical_frames(self):
        s, p = zero_shot_losses(self.image, self.image, self.still, self.clear)
        self.assertAlmostEqual(s, 0.0, places=12)
        self.assertEqual(p, 0.0)

    def test_brightness_offset(self):
        s, p = zero_shot_losses(self.image, self.image + 10.0 / 255.0, self.still, self.clear)
        self.assertAlmostEqual(p, 10.0, delta=1e-9)

    def test_uint8_frames(self):
        a = np.full((24, 24, 3), 100, np.uint8)
        b = np.full((24, 24, 3), 110, np.uint8)
        _, p = zero_shot_losses(a, b, self.still, self.clear)
        self.assertAlmostEqual(p, 10.0, delta=1e-9)

    def test_occluded_pixels_excluded(self):
        other = self.image.copy()
        other[:, 12:] = 1.0 - other[:, 12:]
        ao = np.zeros((24, 24))
        ao[:, 12:] = 1.0
        _, p = zero_shot_losses(self.image, other, self.still, OcclusionMask.from_ao(ao))
        self.assertEqual(p, 0.0)

    def test_empty_region(self):
        s, p = zero_shot_losses(self.image, self.image, self.still, self.clear, np.zeros((24, 24), bool))
        self.assertTrue(math.isnan(s) and math.isnan(p))


class TestAggregation(unittest.TestCase):
    def test_mean_of_sample_means(self):
        mean = mean_reports([FlowMetricsReport(1.0, 10.0, 100), FlowMetricsReport(3.0, 30.0, 300)])
        self.assertEqual(mean, FlowMetricsReport(2.0, 20.0, 400))
        self.assertEqual(mean_reports([DepthRatioReport(4.0, 2), DepthRatioReport(2.0, 1)]), DepthRatioReport(3.0, 3))

    def test_empty(self):
        with self.assertRaises(MetricError):
            mean_reports([])


if __name__ == "__main__":
    unittest.main()
