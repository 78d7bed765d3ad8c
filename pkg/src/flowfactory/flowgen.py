# ABOUTME: Dense optical flow between a pose pair from rendered depth, plus AO-based occlusion.
# ABOUTME: Reprojects source depth into the target camera, samples target depth, and warps images by flow.

import logging
from dataclasses import dataclass

import numpy as np

from flowfactory.render import ambient_occlusion, march_rays

log = logging.getLogger(__name__)

TH_OCC = 0.3
# AO margin in interval widths, so the surface behind Z_i′ is not its own occluder.
AO_MARGIN_INTERVALS = 1.5
_AO_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class FlowField:
    """Per-pixel displacement f_{i→j}; u and v are zero wherever valid is false."""

    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        valid = np.asarray(self.valid, dtype=bool)
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if not (u.shape == v.shape == valid.shape):
            raise ValueError(f"flow shapes differ: u {u.shape}, v {v.shape}, valid {valid.shape}")
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "u", np.where(valid, u, 0.0))
        object.__setattr__(self, "v", np.where(valid, v, 0.0))

    @classmethod
    def zeros(cls, shape, valid=True):
        return cls(np.zeros(shape), np.zeros(shape), np.full(shape, valid, dtype=bool))

    @property
    def shape(self):
        return self.valid.shape

    @property
    def magnitude(self):
        return np.hypot(self.u, self.v)

    def with_valid(self, mask):
        """Same displacements restricted to `mask`."""
        return FlowField(self.u, self.v, self.valid & np.asarray(mask, dtype=bool))


@dataclass(frozen=True, eq=False)
class ReprojectionMaps:
    """p_i′ (target_coords), Z_i′ (depth_in_target) and Z_j′ (target_sampled_depth); NaN where invalid."""

    target_coords: np.ndarray
    depth_in_target: np.ndarray
    target_sampled_depth: np.ndarray

    @property
    def valid(self):
        return np.isfinite(self.depth_in_target)

    @property
    def shape(self):
        return self.depth_in_target.shape


@dataclass(frozen=True, eq=False)
class OcclusionMask:
    occluded: np.ndarray
    ao_values: np.ndarray
    threshold: float = TH_OCC

    @classmethod
    def from_ao(cls, ao_values, threshold=TH_OCC):
        ao_values = np.asarray(ao_values, dtype=np.float64)
        return cls(ao_values >= threshold, ao_values, threshold)

    @classmethod
    def clear(cls, shape, threshold=TH_OCC):
        return cls.from_ao(np.zeros(shape), threshold)


def bilinear_sample(image, x, y):
    """Bilinear lookup of image (H, W[, C]) at float coordinates.

    Returns (values, ok). ok is false outside [0, W-1] x [0, H-1] and where
    a neighbor with non-zero weight is not finite. Integer coordinates
    return the stored pixel exactly.
    """
    img = np.asarray(image, dtype=np.float64)
    height, width = img.shape[:2]
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        ok = (x >= 0) & (x <= width - 1) & (y >= 0) & (y <= height - 1)
    xs = np.where(ok, x, 0.0)
    ys = np.where(ok, y, 0.0)
    x0 = np.minimum(np.floor(xs).astype(np.int64), max(width - 2, 0))
    y0 = np.minimum(np.floor(ys).astype(np.int64), max(height - 2, 0))
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    fx = xs - x0
    fy = ys - y0
    corners = (
        ((1.0 - fx) * (1.0 - fy), img[y0, x0]),
        (fx * (1.0 - fy), img[y0, x1]),
        ((1.0 - fx) * fy, img[y1, x0]),
        (fx * fy, img[y1, x1]),
    )
    total = 0.0
    for weight, value in corners:
        if img.ndim == 3:
            weight = weight[..., None]
        used = weight > 0
        total = total + np.where(used, weight * np.where(used, value, 0.0), 0.0)
        bad = used & ~np.isfinite(value)
        if img.ndim == 3:
            bad = bad.any(axis=-1)
        ok &= ~bad
    return total, ok


def reproject(Z_i, camera, P_i, P_j, Z_j=None):
    """Carry every valid source pixel into the target camera.

    X_world = P_i · (Z_i · K⁻¹ · (u, v, 1)); X_j = P_j⁻¹ · X_world. Z_i′ is the
    z component of X_j and p_i′ its projection. With Z_j given, Z_j′ is the
    bilinear sample of Z_j at p_i′. Points that land on or behind the target
    camera are invalid.
    """
    Z = np.asarray(Z_i, dtype=np.float64)
    if Z.shape != camera.shape:
        raise ValueError(f"depth map shape {Z.shape} does not match camera {camera.shape}")
    u, v = camera.pixel_grid()
    points_cam = camera.unproject(u, v) * Z[..., None]
    points_j = P_j.to_camera(P_i.to_world(points_cam))
    x, y, z = camera.project(points_j)
    with np.errstate(invalid="ignore"):
        valid = np.isfinite(Z) & (z > 0)
    coords = np.where(valid[..., None], np.stack([x, y], axis=-1), np.nan)
    depth = np.where(valid, z, np.nan)
    sampled = np.full(Z.shape, np.nan)
    if Z_j is not None:
        Z_j = np.asarray(Z_j, dtype=np.float64)
        if Z_j.shape != camera.shape:
            raise ValueError(f"target depth shape {Z_j.shape} does not match camera {camera.shape}")
        values, ok = bilinear_sample(Z_j, coords[..., 0], coords[..., 1])
        sampled = np.where(valid & ok, values, np.nan)
    return ReprojectionMaps(coords, depth, sampled)


def flow_from_reprojection(maps):
    """f_{i→j} = p_i′ − p_i, valid wherever the reprojection is."""
    height, width = maps.shape
    v, u = np.mgrid[0:height, 0:width]
    valid = maps.valid
    return FlowField(
        np.where(valid, maps.target_coords[..., 0] - u, 0.0),
        np.where(valid, maps.target_coords[..., 1] - v, 0.0),
        valid,
    )


def occlusion_from_ao(scene, camera, P_j, maps, cfg, th_occ=TH_OCC, seed=0, margin=None):
    """Occlusion of reprojected points as seen from the target camera.

    For each valid pixel, the target-view ray through p_i′ is marched and the
    weight of intervals ending at least `margin` before Z_i′ is summed.
    That sum is the chance that a surface sits in front of the point.
    """
    if margin is None:
        margin = AO_MARGIN_INTERVALS * cfg.interval_width
    ao = np.zeros(maps.shape)
    valid = maps.valid
    index = np.flatnonzero(valid)
    x = maps.target_coords[..., 0].ravel()[index]
    y = maps.target_coords[..., 1].ravel()[index]
    z = maps.depth_in_target.ravel()[index]
    flat = ao.ravel()
    for start in range(0, index.size, _AO_CHUNK):
        part = slice(start, start + _AO_CHUNK)
        origins, dirs, cos = camera.rays(P_j, x[part], y[part])
        profile = march_rays(scene, origins, dirs, cfg, seed, index[part])
        flat[index[part]] = ambient_occlusion(profile, z[part] / cos, margin)
    ao = flat.reshape(maps.shape)
    log.debug("occlusion: %d of %d valid pixels occluded", int((ao[valid] >= th_occ).sum()), index.size)
    return OcclusionMask.from_ao(ao, th_occ)


def backward_warp(image_j, flow):
    """Sample image_j at p + f(p) for every pixel p.

    Returns (warped, sampled_valid); sampled_valid is false where the flow
    is invalid or the sample point leaves the image.
    """
    image_j = np.asarray(image_j, dtype=np.float64)
    if image_j.shape[:2] != flow.shape:
        raise ValueError(f"image shape {image_j.shape[:2]} does not match flow {flow.shape}")
    height, width = flow.shape
    v, u = np.mgrid[0:height, 0:width]
    values, ok = bilinear_sample(image_j, u + flow.u, v + flow.v)
    sampled_valid = flow.valid & ok
    mask = sampled_valid[..., None] if image_j.ndim == 3 else sampled_valid
    return np.where(mask, values, 0.0), sampled_valid


def compose_flows(f_ij, f_ji):
    """Residual displacement of going i→j and back j→i, per source pixel.

    Returns (du, dv, valid); valid requires both flows to be defined along
    the round trip.
    """
    height, width = f_ij.shape
    v, u = np.mgrid[0:height, 0:width]
    x = u + f_ij.u
    y = v + f_ij.v
    back_u, ok_u = bilinear_sample(np.where(f_ji.valid, f_ji.u, np.nan), x, y)
    back_v, ok_v = bilinear_sample(np.where(f_ji.valid, f_ji.v, np.nan), x, y)
    valid = f_ij.valid & ok_u & ok_v
    du = np.where(valid, f_ij.u + back_u, np.nan)
    dv = np.where(valid, f_ij.v + back_v, np.nan)
    return du, dv, valid
