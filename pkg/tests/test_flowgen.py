# ABOUTME: Tests for depth reprojection, flow extraction, warping and AO occlusion.
# ABOUTME: Compares generated flow and occlusion on the slab-and-sphere scene with analytic ray casts.

import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from flowfactory.flowgen import (
    FlowField,
    OcclusionMask,
    backward_warp,
    bilinear_sample,
    compose_flows,
    flow_from_reprojection,
    occlusion_from_ao,
    reproject,
)
from flowfactory.render import render_view
from flowfactory.scene import Pose, first_surface_depths, look_at, sample_pose_pairs
from tests.scenes import (
    CAMERA,
    POSE_SPEC,
    SAMPLING,
    SMALL_CAMERA,
    side_views,
    slab_sphere_scene,
)

ORIGIN = Pose(np.eye(3), [0.0, 0.0, 0.0])


def plane_depth(value=5.0, camera=SMALL_CAMERA):
    return np.full(camera.shape, value)


def oracle_depth(scene, camera, pose):
    origins, dirs, cos = camera.rays(pose)
    return (first_surface_depths(scene, origins, dirs) * cos).reshape(camera.shape)


class TestBilinear(unittest.TestCase):
    def setUp(self):
        self.image = np.arange(12, dtype=float).reshape(3, 4)

    def test_integer_coordinates_are_exact(self):
        values, ok = bilinear_sample(self.image, np.array([0.0, 3.0, 2.0]), np.array([0.0, 2.0, 1.0]))
        assert_array_equal(values, [0.0, 11.0, 6.0])
        self.assertTrue(ok.all())

    def test_half_pixel_averages(self):
        values, ok = bilinear_sample(self.image, np.array([0.5]), np.array([0.5]))
        self.assertAlmostEqual(values[0], 2.5)

    def test_outside_and_nan_neighbors(self):
        image = self.image.copy()
        image[1, 1] = np.nan
        values, ok = bilinear_sample(image, np.array([-0.1, 3.5, 0.5, 0.0]), np.array([0.0, 0.0, 0.5, 0.0]))
        assert_array_equal(ok, [False, False, False, True])


class TestReprojection(unittest.TestCase):
    def test_identity_pose_gives_zero_flow(self):
        pose = look_at((1.0, 2.0, 4.0), (0.0, 0.0, 0.0))
        flow = flow_from_reprojection(reproject(plane_depth(), SMALL_CAMERA, pose, pose))
        self.assertTrue(flow.valid.all())
        assert_allclose(flow.u, 0.0, atol=1e-9)
        assert_allclose(flow.v, 0.0, atol=1e-9)

    def test_sideways_translation_shifts_columns(self):
        right = Pose(np.eye(3), [0.5, 0.0, 0.0])
        maps = reproject(plane_depth(), SMALL_CAMERA, ORIGIN, right, plane_depth())
        flow = flow_from_reprojection(maps)
        assert_allclose(flow.u, -3.0, atol=1e-12)
        assert_allclose(flow.magnitude, 3.0, atol=1e-12)
        assert_allclose(flow.v, 0.0, atol=1e-12)
        assert_allclose(maps.depth_in_target, 5.0)
        sampled = np.isfinite(maps.target_sampled_depth)
        assert_array_equal(sampled[:, :3], False)
        assert_allclose(maps.target_sampled_depth[sampled], 5.0)

    def test_invalid_depth_and_points_behind_target(self):
        depth = plane_depth()
        depth[0, 0] = np.nan
        flow = flow_from_reprojection(reproject(depth, SMALL_CAMERA, ORIGIN, ORIGIN))
        self.assertFalse(flow.valid[0, 0])
        self.assertEqual(flow.u[0, 0], 0.0)
        turned = Pose(np.diag([-1.0, 1.0, -1.0]), [0.0, 0.0, 0.0])
        flow = flow_from_reprojection(reproject(plane_depth(), SMALL_CAMERA, ORIGIN, turned))
        self.assertFalse(flow.valid.any())

    def test_shape_mismatch(self):
        with self.assertRaises(ValueError):
            reproject(np.ones((3, 3)), SMALL_CAMERA, ORIGIN, ORIGIN)

    def test_round_trip_of_consistent_flows(self):
        right = Pose(np.eye(3), [0.5, 0.0, 0.0])
        f_ij = flow_from_reprojection(reproject(plane_depth(), SMALL_CAMERA, ORIGIN, right))
        f_ji = flow_from_reprojection(reproject(plane_depth(), SMALL_CAMERA, right, ORIGIN))
        du, dv, valid = compose_flows(f_ij, f_ji)
        self.assertTrue(valid.any())
        assert_allclose(du[valid], 0.0, atol=1e-9)
        assert_allclose(dv[valid], 0.0, atol=1e-9)


class TestAnalyticScene(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.scene = slab_sphere_scene()
        cls.first, cls.second = sample_pose_pairs(POSE_SPEC, np.zeros(3), cls.scene)[0]
        cls.z1 = render_view(cls.scene, CAMERA, cls.first, SAMPLING).midpoint_depth
        cls.z2 = render_view(cls.scene, CAMERA, cls.second, SAMPLING).midpoint_depth
        cls.maps = reproject(cls.z1, CAMERA, cls.first, cls.second, cls.z2)
        cls.occ = occlusion_from_ao(cls.scene, CAMERA, cls.second, cls.maps, SAMPLING)

    def test_flow_matches_closed_form_reprojection(self):
        flow = flow_from_reprojection(self.maps)
        oracle = oracle_depth(self.scene, CAMERA, self.first)
        truth = flow_from_reprojection(reproject(oracle, CAMERA, self.first, self.second))
        scored = flow.valid & truth.valid & ~self.occ.occluded
        self.assertGreater(scored.sum(), 1000)
        error = np.hypot(flow.u - truth.u, flow.v - truth.v)[scored]
        self.assertGreaterEqual((error <= 0.05).mean(), 0.99)

    def test_round_trip_returns_to_source_pixel(self):
        f_ij = flow_from_reprojection(self.maps)
        f_ji = flow_from_reprojection(reproject(self.z2, CAMERA, self.second, self.first))
        du, dv, valid = compose_flows(f_ij, f_ji)
        scored = valid & ~self.occ.occluded
        self.assertGreater(scored.sum(), 1000)
        self.assertGreaterEqual((np.hypot(du, dv)[scored] <= 0.5).mean(), 0.98)


class TestWarp(unittest.TestCase):
    def test_warp_by_one_column(self):
        image = np.tile(np.arange(8, dtype=float) / 7.0, (4, 1))
        flow = FlowField(np.ones((4, 8)), np.zeros((4, 8)), np.ones((4, 8), bool))
        warped, ok = backward_warp(image, flow)
        assert_allclose(warped[:, :7], image[:, 1:])
        assert_array_equal(ok[:, 7], False)
        self.assertTrue(ok[:, :7].all())

    def test_invalid_flow_is_not_sampled(self):
        flow = FlowField.zeros((4, 8), valid=False)
        warped, ok = backward_warp(np.ones((4, 8, 3)), flow)
        self.assertFalse(ok.any())
        self.assertEqual(warped.sum(), 0.0)


class TestOcclusion(unittest.TestCase):
    def test_mask_threshold(self):
        mask = OcclusionMask.from_ao(np.array([0.1, 0.3, 0.9]), 0.3)
        assert_array_equal(mask.occluded, [False, True, True])
        self.assertFalse(OcclusionMask.clear((2, 2)).occluded.any())

    def test_ao_agrees_with_visibility(self):
        scene = slab_sphere_scene()
        source, target = side_views()
        cfg = SAMPLING
        z_i = render_view(scene, CAMERA, source, cfg).midpoint_depth
        maps = reproject(z_i, CAMERA, source, target)
        occ = occlusion_from_ao(scene, CAMERA, target, maps, cfg)

        truth = oracle_depth(scene, CAMERA, source)
        hit = np.isfinite(truth)
        u, v = CAMERA.pixel_grid()
        points = source.to_world(CAMERA.unproject(u, v) * np.where(hit, truth, 1.0)[..., None])
        offset = points.reshape(-1, 3) - target.position
        distance = np.linalg.norm(offset, axis=1)
        first = first_surface_depths(scene, np.broadcast_to(target.position, offset.shape), offset / distance[:, None])
        hidden = (first < distance - 3 * cfg.interval_width).reshape(CAMERA.shape)

        compare = hit & maps.valid
        self.assertGreater(compare.sum(), 1000)
        self.assertTrue(hidden[compare].any())
        self.assertGreaterEqual((occ.occluded[compare] == hidden[compare]).mean(), 0.98)
        self.assertTrue(np.all((occ.ao_values >= 0) & (occ.ao_values <= 1 + 1e-12)))


if __name__ == "__main__":
    unittest.main()
