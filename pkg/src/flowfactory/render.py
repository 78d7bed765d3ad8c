# ABOUTME: Ray marching and emission-absorption volume rendering over a scene's density field.
# ABOUTME: Produces per-ray weight profiles and per-view RGB, expected/midpoint depth and weight-CDF quantiles.

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from flowfactory.scene import field_at

log = logging.getLogger(__name__)

# Rays whose total weight stays below this have no midpoint depth.
W_MIN = 0.5

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX_2 = np.uint64(0x94D049BB133111EB)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))


@dataclass(frozen=True)
class RaySamplingConfig:
    t_near: float
    t_far: float
    n_intervals: int = 256
    stratified: bool = False

    def __post_init__(self):
        if not (0 <= self.t_near < self.t_far and math.isfinite(self.t_far)):
            raise ValueError(
                f"ray range must satisfy 0 <= t_near < t_far, got [{self.t_near}, {self.t_far}]"
            )
        if int(self.n_intervals) < 2:
            raise ValueError(f"n_intervals must be >= 2, got {self.n_intervals}")
        object.__setattr__(self, "t_near", float(self.t_near))
        object.__setattr__(self, "t_far", float(self.t_far))
        object.__setattr__(self, "n_intervals", int(self.n_intervals))
        object.__setattr__(self, "stratified", bool(self.stratified))

    @property
    def interval_width(self):
        return (self.t_far - self.t_near) / self.n_intervals

    @classmethod
    def for_scene(cls, scene, pose_spec, center=None, n_intervals=256, stratified=False):
        """Near/far planes that bracket the scene bounds from every sampled camera."""
        center = scene.center if center is None else np.asarray(center, dtype=np.float64)
        lo, hi = (np.array(b) for b in scene.bounds)
        corners = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
        reach = float(np.linalg.norm(corners - center, axis=1).max())
        r_min, r_max = pose_spec.orbit_radius_range
        t_near = max(0.0, r_min - pose_spec.baseline_max - reach)
        t_far = r_max + pose_spec.baseline_max + reach
        return cls(t_near, t_far, n_intervals, stratified)

    def to_dict(self):
        return {
            "t_near": self.t_near,
            "t_far": self.t_far,
            "n_intervals": self.n_intervals,
            "stratified": self.stratified,
        }


@dataclass(frozen=True, eq=False)
class WeightProfile:
    """Per-ray interval boundaries, densities, weights and transmittance.

    Arrays carry any number of leading ray dimensions: boundaries (..., n+1),
    sigmas/weights/transmittance (..., n) and optional colors (..., n, 3).
    """

    boundaries: np.ndarray
    sigmas: np.ndarray
    weights: np.ndarray
    transmittance: np.ndarray
    colors: np.ndarray = None

    @property
    def midpoints(self):
        return 0.5 * (self.boundaries[..., :-1] + self.boundaries[..., 1:])

    @property
    def total_weight(self):
        return self.weights.sum(axis=-1)

    def ray(self, index):
        """The profile of a single ray from a batch."""
        return WeightProfile(
            self.boundaries[index],
            self.sigmas[index],
            self.weights[index],
            self.transmittance[index],
            None if self.colors is None else self.colors[index],
        )


@dataclass(frozen=True, eq=False)
class RenderedView:
    """Per-pixel rendering outputs; every depth map is z-depth, NaN where invalid."""

    rgb: np.ndarray
    midpoint_depth: np.ndarray
    expected_depth: np.ndarray
    weight_quantile_lo: np.ndarray
    weight_quantile_hi: np.ndarray
    total_weight: np.ndarray
    quantile_levels: tuple = (0.1, 0.9)

    @property
    def shape(self):
        return self.total_weight.shape


def _splitmix64(x):
    z = x + _GOLDEN
    z = (z ^ (z >> _S30)) * _MIX_1
    z = (z ^ (z >> _S27)) * _MIX_2
    return z ^ (z >> _S31)


def counter_uniforms(seed, ray_ids, count):
    """Uniforms in [0, 1) of shape (len(ray_ids), count), one stream per ray id.

    Value (r, k) depends only on (seed, ray_ids[r], k), so any batching or
    execution order reproduces the same numbers.
    """
    ids = np.asarray(ray_ids, dtype=np.int64).astype(np.uint64).reshape(-1, 1)
    k = np.arange(count, dtype=np.uint64).reshape(1, -1)
    with np.errstate(over="ignore"):
        base = _splitmix64(np.array([seed % (1 << 64)], dtype=np.uint64))
        key = _splitmix64(base ^ _splitmix64(ids))
        bits = _splitmix64(key + k * _GOLDEN)
    return (bits >> _S11).astype(np.float64) * (1.0 / 9007199254740992.0)


def profile_from_sigmas(boundaries, sigmas, colors=None):
    """Weights and transmittance from interval boundaries and densities.

    w_i = (1 - exp(-σ_i Δ_i)) · E_i with E_i = exp(-Σ_{j<i} σ_j Δ_j).
    """
    boundaries = np.asarray(boundaries, dtype=np.float64)
    sigmas = np.asarray(sigmas, dtype=np.float64)
    tau = sigmas * np.diff(boundaries, axis=-1)
    alpha = 1.0 - np.exp(-tau)
    optical = np.cumsum(tau, axis=-1)
    before = np.concatenate([np.zeros(optical.shape[:-1] + (1,)), optical[..., :-1]], axis=-1)
    transmittance = np.exp(-before)
    return WeightProfile(boundaries, sigmas, alpha * transmittance, transmittance, colors)


def march_rays(scene, origins, dirs, cfg, seed=0, ray_ids=None):
    """March a batch of unit-direction rays through [t_near, t_far].

    Densities and colors are sampled at interval midpoints. With stratified
    sampling, every inner boundary is jittered within its own stratum using
    the counter stream of its ray id.
    """
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    n_rays = dirs.shape[0]
    n = cfg.n_intervals
    boundaries = np.tile(np.linspace(cfg.t_near, cfg.t_far, n + 1), (n_rays, 1))
    if cfg.stratified:
        ids = np.arange(n_rays) if ray_ids is None else ray_ids
        jitter = counter_uniforms(seed, ids, n - 1) - 0.5
        boundaries[:, 1:-1] += jitter * cfg.interval_width
    mids = 0.5 * (boundaries[:, :-1] + boundaries[:, 1:])
    points = origins[:, None, :] + mids[..., None] * dirs[:, None, :]
    sigma, color = field_at(scene, points.reshape(-1, 3))
    return profile_from_sigmas(boundaries, sigma.reshape(n_rays, n), color.reshape(n_rays, n, 3))


def march_ray(scene, origin, direction, cfg, rng_state=(0, 0)):
    """March a single ray; rng_state is (seed, ray id)."""
    seed, ray_id = rng_state
    return march_rays(scene, origin, direction, cfg, seed, [ray_id]).ray(0)


def _scalar(value):
    return float(value) if np.ndim(value) == 0 else value


def render_pixel_rgb(profile, colors=None, background=(0.0, 0.0, 0.0)):
    """C = Σ w_i c_i + (1 - Σ w_i) · background."""
    colors = profile.colors if colors is None else np.asarray(colors, dtype=np.float64)
    w = profile.weights
    if colors is None or colors.shape[-2] != w.shape[-1]:
        raise ValueError("need one color per interval")
    rgb = (w[..., None] * colors).sum(axis=-2)
    return rgb + (1.0 - w.sum(axis=-1))[..., None] * np.asarray(background, dtype=np.float64)


def expected_depth(profile, w_min=W_MIN):
    """Σ w_i · t_mid_i, or NaN when the ray's total weight is below w_min."""
    w = profile.weights
    depth = (w * profile.midpoints).sum(axis=-1)
    return _scalar(np.where(w.sum(axis=-1) >= w_min, depth, np.nan))


def weight_quantile_depth(profile, q, w_min=W_MIN):
    """Depth where the normalized weight CDF crosses q.

    The CDF is piecewise linear inside each interval. Returns NaN when the
    ray's total weight is below w_min.
    """
    if not 0 < q < 1:
        raise ValueError(f"quantile must lie in (0, 1), got {q}")
    w = profile.weights
    t = profile.boundaries
    cum = np.cumsum(w, axis=-1)
    total = cum[..., -1:]
    with np.errstate(invalid="ignore", divide="ignore"):
        cdf = np.concatenate([np.zeros_like(total), cum / total], axis=-1)
        idx = np.maximum(np.argmax(cdf >= q, axis=-1), 1)[..., None]
        c_lo = np.take_along_axis(cdf, idx - 1, axis=-1)[..., 0]
        c_hi = np.take_along_axis(cdf, idx, axis=-1)[..., 0]
        t_lo = np.take_along_axis(t, idx - 1, axis=-1)[..., 0]
        t_hi = np.take_along_axis(t, idx, axis=-1)[..., 0]
        depth = t_lo + (q - c_lo) / (c_hi - c_lo) * (t_hi - t_lo)
    return _scalar(np.where(total[..., 0] >= w_min, depth, np.nan))


def ambient_occlusion(profile, depth, margin=0.0):
    """Total weight of intervals that end at or before depth - margin.

    This is the probability that something lies between the viewpoint and
    `depth` along the ray.
    """
    limit = np.asarray(depth, dtype=np.float64)[..., None] - margin
    ends = profile.boundaries[..., 1:]
    with np.errstate(invalid="ignore"):
        before = ends <= limit
    return _scalar(np.where(before, profile.weights, 0.0).sum(axis=-1))


def render_view(scene, camera, pose, cfg, seed=0, quantiles=(0.1, 0.9), workers=1, block_rows=8):
    """Render one view: one ray per pixel through the pixel center.

    Rows are marched in blocks; every pixel writes its own slot and draws
    jitter from its own counter stream, so `workers` never changes the output.
    """
    th_low, th_high = quantiles
    height, width = camera.shape
    u, v = camera.pixel_grid()
    rgb = np.empty((height, width, 3))
    maps = {
        name: np.empty((height, width))
        for name in ("mid", "expected", "lo", "hi", "total")
    }

    def render_block(r0):
        r1 = min(height, r0 + block_rows)
        bu, bv = u[r0:r1], v[r0:r1]
        origins, dirs, cos = camera.rays(pose, bu, bv)
        ids = (bv * width + bu).astype(np.int64).ravel()
        profile = march_rays(scene, origins, dirs, cfg, seed, ids)
        shape = bu.shape
        rgb[r0:r1] = np.clip(
            render_pixel_rgb(profile, background=scene.background_color), 0.0, 1.0
        ).reshape(shape + (3,))
        maps["mid"][r0:r1] = (weight_quantile_depth(profile, 0.5) * cos).reshape(shape)
        maps["expected"][r0:r1] = (expected_depth(profile) * cos).reshape(shape)
        maps["lo"][r0:r1] = (weight_quantile_depth(profile, th_low) * cos).reshape(shape)
        maps["hi"][r0:r1] = (weight_quantile_depth(profile, th_high) * cos).reshape(shape)
        maps["total"][r0:r1] = profile.total_weight.reshape(shape)

    blocks = range(0, height, block_rows)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(render_block, blocks))
    else:
        for r0 in blocks:
            render_block(r0)

    return RenderedView(
        rgb=rgb,
        midpoint_depth=maps["mid"],
        expected_depth=maps["expected"],
        weight_quantile_lo=maps["lo"],
        weight_quantile_hi=maps["hi"],
        total_weight=np.clip(maps["total"], 0.0, 1.0),
        quantile_levels=(th_low, th_high),
    )


def march_pixel(scene, camera, pose, cfg, seed, u, v):
    """Re-march the ray of pixel (u, v) exactly as render_view does.

    Returns (profile, cosine) where cosine converts ray distance to z-depth.
    """
    if not (0 <= u < camera.width and 0 <= v < camera.height):
        raise ValueError(f"pixel ({u}, {v}) outside {camera.width}x{camera.height} image")
    origins, dirs, cos = camera.rays(pose, np.array([[float(u)]]), np.array([[float(v)]]))
    profile = march_rays(scene, origins, dirs, cfg, seed, [int(v) * camera.width + int(u)])
    return profile.ray(0), float(cos[0])


def format_profile(profile, min_weight=1e-6):
    """Text dump of the intervals of one ray that carry weight."""
    w = profile.weights
    total = float(w.sum())
    cdf = np.cumsum(w) / total if total > 0 else np.zeros_like(w)
    lines = [f"{'i':>5} {'t0':>9} {'t1':>9} {'sigma':>10} {'weight':>9} {'E':>9} {'cdf':>7}"]
    for i in np.flatnonzero(w >= min_weight):
        lines.append(
            f"{i:5d} {profile.boundaries[i]:9.4f} {profile.boundaries[i + 1]:9.4f} "
            f"{profile.sigmas[i]:10.4g} {w[i]:9.6f} {profile.transmittance[i]:9.6f} {cdf[i]:7.4f}"
        )
    lines.append(f"total weight {total:.6f} over {w.size} intervals")
    return "\n".join(lines)
