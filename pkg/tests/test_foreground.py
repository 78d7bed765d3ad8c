# ABOUTME: Tests for Bézier floaters: outline validation, scanline rasterization, sampling and compositing.
# ABOUTME: A translating circle checks flow override, occlusion update and supervision inside footprints.

import math
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from flowfactory.flowgen import FlowField, OcclusionMask
from flowfactory.foreground import (
    Floater,
    Texture,
    composite,
    flatten_outline,
    rasterize_floater,
    rasterize_polygon,
    sample_floaters,
)
from flowfactory.masks import CredibilityMaps, filter_label
from tests.scenes import circle_segments

SIZE = (64, 96)
RED = Texture((1.0, 0.0, 0.0))


def translation(dx, dy, size=SIZE):
    height, width = size
    return np.array([[1.0, 0.0, dx / width], [0.0, 1.0, dy / height], [0.0, 0.0, 1.0]])


def background(ssim=0.0):
    flow = FlowField.zeros(SIZE)
    cred = CredibilityMaps(np.full(SIZE, ssim), np.zeros(SIZE), np.zeros(SIZE))
    occ = OcclusionMask.clear(SIZE)
    label = filter_label(flow, cred, occ)
    frames = (np.full(SIZE + (3,), 0.5), np.full(SIZE + (3,), 0.5))
    return frames, label, occ


class TestFloaterValidation(unittest.TestCase):
    def test_open_outline_rejected(self):
        segments = circle_segments((30, 30), 10, SIZE)
        segments[1, 0] += 0.001
        with self.assertRaises(ValueError):
            Floater(segments, RED, np.eye(3))

    def test_segment_count_and_singular_homography(self):
        with self.assertRaises(ValueError):
            Floater(circle_segments((30, 30), 10, SIZE)[:2], RED, np.eye(3))
        with self.assertRaises(ValueError):
            Floater(circle_segments((30, 30), 10, SIZE), RED, np.zeros((3, 3)))

    def test_dict_round_trip(self):
        floater = Floater(circle_segments((30, 30), 10, SIZE), Texture((1, 0, 0), (0, 0, 1)), translation(5, 3), 2)
        again = Floater.from_dict(floater.to_dict())
        assert_array_equal(again.segments, floater.segments)
        assert_array_equal(again.homography, floater.homography)
        self.assertEqual(again.texture, floater.texture)
        self.assertEqual(again.depth_order, 2)


class TestRasterize(unittest.TestCase):
    def test_square_is_half_open(self):
        mask = rasterize_polygon([(2, 2), (6, 2), (6, 6), (2, 6)], (10, 10))
        self.assertEqual(mask.sum(), 16)
        self.assertTrue(mask[2:6, 2:6].all())

    def test_circle_area(self):
        floater = Floater(circle_segments((48, 32), 20, SIZE), RED, np.eye(3))
        area = rasterize_floater(floater, SIZE).sum()
        self.assertLess(abs(area - math.pi * 400) / (math.pi * 400), 0.02)

    def test_flattening_stays_near_curve(self):
        segments = Floater(circle_segments((48, 32), 20, SIZE), RED, np.eye(3)).pixel_segments(SIZE)
        outline = flatten_outline(segments)
        radii = np.hypot(outline[:, 0] - 48, outline[:, 1] - 32)
        assert_allclose(radii, 20, atol=0.05)

    def test_degenerate_outline_is_empty(self):
        floater = Floater(np.full((3, 4, 2), 0.5), RED, np.eye(3))
        self.assertFalse(rasterize_floater(floater, SIZE).any())

    def test_frame_argument(self):
        floater = Floater(circle_segments((48, 32), 20, SIZE), RED, np.eye(3))
        with self.assertRaises(ValueError):
            rasterize_floater(floater, SIZE, frame=3)


class TestSampling(unittest.TestCase):
    def test_deterministic(self):
        a = [f.to_dict() for f in sample_floaters(3, 4, SIZE)]
        b = [f.to_dict() for f in sample_floaters(3, 4, SIZE)]
        self.assertEqual(a, b)
        self.assertNotEqual(a, [f.to_dict() for f in sample_floaters(3, 5, SIZE)])

    def test_outlines_fit_in_disk(self):
        floaters = sample_floaters(4, 8, SIZE)
        self.assertEqual([f.depth_order for f in floaters], [0, 1, 2, 3])
        for floater in floaters:
            points = floater.pixel_segments(SIZE).reshape(-1, 2)
            spread = np.linalg.norm(points[:, None] - points[None], axis=-1).max()
            self.assertLessEqual(spread, 2 * 0.25 * 64 + 1e-9)
            self.assertTrue(3 <= floater.segments.shape[0] <= 6)

    def test_zero_floaters(self):
        self.assertEqual(sample_floaters(0, 1, SIZE), [])
        with self.assertRaises(ValueError):
            sample_floaters(-1, 1, SIZE)


class TestComposite(unittest.TestCase):
    def test_no_floaters_is_identity(self):
        frames, label, occ = background()
        result = composite(frames, label, occ, [])
        self.assertIs(result.image_1, frames[0])
        self.assertIs(result.image_2, frames[1])
        self.assertIs(result.label, label)
        self.assertIs(result.occlusion, occ)
        self.assertFalse(result.fg_mask_1.any())

    def test_translating_circle(self):
        frames, label, occ = background(ssim=0.5)
        floater = Floater(circle_segments((30, 30), 10, SIZE), RED, translation(5, 3))
        result = composite(frames, label, occ, [floater])
        fg_1, fg_2 = result.fg_mask_1, result.fg_mask_2
        self.assertGreater(fg_1.sum(), 250)

        flow = result.label.flow
        assert_allclose(flow.u[fg_1], 5.0, atol=1e-9)
        assert_allclose(flow.v[fg_1], 3.0, atol=1e-9)
        assert_allclose(result.image_1[fg_1], [[1.0, 0.0, 0.0]] * int(fg_1.sum()))
        assert_allclose(result.image_2[fg_2], [[1.0, 0.0, 0.0]] * int(fg_2.sum()))

        shifted = np.roll(fg_1, (3, 5), axis=(0, 1))
        self.assertGreaterEqual((shifted & fg_2).sum() / (shifted | fg_2).sum(), 0.98)

        assert_array_equal(result.occlusion_update, ~fg_1 & fg_2)
        assert_array_equal(result.occlusion.occluded, ~fg_1 & fg_2)
        assert_array_equal(result.label.supervision_mask, fg_1 | (~fg_1 & fg_2))
        self.assertEqual(result.label.counts["foreground"], int(fg_1.sum()))

    def test_static_floater_stamps_both_frames(self):
        frames, label, occ = background()
        floater = Floater(circle_segments((60, 20), 8, SIZE), RED, np.eye(3))
        result = composite(frames, label, occ, [floater])
        assert_array_equal(result.fg_mask_1, result.fg_mask_2)
        assert_allclose(result.label.flow.u[result.fg_mask_1], 0.0, atol=1e-12)
        assert_array_equal(result.image_1, result.image_2)

    def test_nearer_floater_paints_last(self):
        frames, label, occ = background()
        near = Floater(circle_segments((30, 30), 10, SIZE), RED, np.eye(3), depth_order=0)
        far = Floater(circle_segments((30, 30), 12, SIZE), Texture((0.0, 0.0, 1.0)), np.eye(3), depth_order=1)
        result = composite(frames, label, occ, [near, far])
        assert_allclose(result.image_1[30, 30], [1.0, 0.0, 0.0])

    def test_sampled_floaters_are_always_supervised(self):
        frames, label, occ = background(ssim=0.9)
        result = composite(frames, label, occ, sample_floaters(2, 3, SIZE))
        fg = result.fg_mask_1
        self.assertTrue(fg.any())
        self.assertTrue(result.label.supervision_mask[fg].all())
        self.assertTrue(result.label.flow.valid[fg].all())
        self.assertFalse(result.occlusion.occluded[fg].any())

    def test_background_supervision_outside_footprints_never_shrinks(self):
        rng = np.random.default_rng(8)
        flow = FlowField(rng.uniform(-6, 6, SIZE), rng.uniform(-6, 6, SIZE), rng.uniform(size=SIZE) < 0.9)
        cred = CredibilityMaps(
            rng.uniform(0.0, 0.2, SIZE), rng.uniform(0.0, 0.4, SIZE), rng.uniform(0.0, 0.02, SIZE)
        )
        occ = OcclusionMask.from_ao(rng.uniform(0.0, 0.6, SIZE))
        label = filter_label(flow, cred, occ)
        frames = (rng.uniform(size=SIZE + (3,)), rng.uniform(size=SIZE + (3,)))
        before = label.supervision_mask
        self.assertTrue(before.any() and not before.all())
        for seed in range(5):
            result = composite(frames, label, occ, sample_floaters(3, seed, SIZE))
            outside = ~result.fg_mask_1 & ~result.fg_mask_2
            after = result.label.supervision_mask
            self.assertTrue(outside.any())
            self.assertFalse(np.any(before & outside & ~after))

    def test_shape_mismatch(self):
        frames, label, occ = background()
        with self.assertRaises(ValueError):
            composite((frames[0][:10], frames[1]), label, occ, [])


if __name__ == "__main__":
    unittest.main()
