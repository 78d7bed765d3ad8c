# ABOUTME: Volumetric scene model: analytic primitives, voxel grids, pinhole cameras and rigid poses.
# ABOUTME: Samples center-facing pose pairs and provides the exact first-surface ray oracle used by tests.

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.spatial.transform import Rotation

from flowfactory.helpers import FactoryError

log = logging.getLogger(__name__)

MAX_POSE_ATTEMPTS = 100
ORTHONORMAL_TOL = 1e-9

_AXES = np.eye(3)


class PoseSamplingError(FactoryError):
    """Raised when the sampler keeps landing cameras inside geometry."""

    def __init__(self, attempts, position):
        self.attempts = attempts
        self.position = [float(x) for x in position]
        super().__init__(
            f"camera position {self.position} lies inside scene geometry "
            f"after {attempts} attempts"
        )

    def fields(self):
        return {"attempts": self.attempts, "position": self.position}


def _rgb(value, name="rgb"):
    rgb = tuple(float(c) for c in value)
    if len(rgb) != 3 or not all(0.0 <= c <= 1.0 for c in rgb):
        raise ValueError(f"{name} must be three values in [0, 1], got {value!r}")
    return rgb


def _vec3(value, name):
    vec = tuple(float(c) for c in value)
    if len(vec) != 3 or not all(math.isfinite(c) for c in vec):
        raise ValueError(f"{name} must be three finite numbers, got {value!r}")
    return vec


# Color functions


@dataclass(frozen=True)
class Constant:
    rgb: tuple

    def __post_init__(self):
        object.__setattr__(self, "rgb", _rgb(self.rgb))

    def __call__(self, points):
        return np.broadcast_to(np.array(self.rgb), points.shape[:-1] + (3,))

    def to_dict(self):
        return {"type": "constant", "rgb": list(self.rgb)}


@dataclass(frozen=True)
class Checkerboard:
    """Axis-aligned 3D checkerboard with cubic cells of edge `scale`."""

    scale: float
    rgb_a: tuple
    rgb_b: tuple

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"checkerboard scale must be > 0, got {self.scale!r}")
        object.__setattr__(self, "rgb_a", _rgb(self.rgb_a, "rgb_a"))
        object.__setattr__(self, "rgb_b", _rgb(self.rgb_b, "rgb_b"))

    def __call__(self, points):
        cells = np.floor(points / self.scale).astype(np.int64).sum(axis=-1)
        odd = (cells % 2).astype(bool)
        return np.where(odd[..., None], np.array(self.rgb_b), np.array(self.rgb_a))

    def to_dict(self):
        return {
            "type": "checker",
            "scale": self.scale,
            "rgb_a": list(self.rgb_a),
            "rgb_b": list(self.rgb_b),
        }


@dataclass(frozen=True)
class Gradient:
    """Linear ramp from rgb_a to rgb_b along `axis`, between projections lo and hi."""

    axis: tuple
    lo: float
    hi: float
    rgb_a: tuple
    rgb_b: tuple

    def __post_init__(self):
        axis = np.array(_vec3(self.axis, "gradient axis"))
        norm = np.linalg.norm(axis)
        if norm == 0:
            raise ValueError("gradient axis must be non-zero")
        if not self.hi > self.lo:
            raise ValueError(f"gradient needs hi > lo, got lo={self.lo} hi={self.hi}")
        object.__setattr__(self, "axis", tuple(axis / norm))
        object.__setattr__(self, "rgb_a", _rgb(self.rgb_a, "rgb_a"))
        object.__setattr__(self, "rgb_b", _rgb(self.rgb_b, "rgb_b"))

    def __call__(self, points):
        s = np.clip((points @ np.array(self.axis) - self.lo) / (self.hi - self.lo), 0.0, 1.0)
        a = np.array(self.rgb_a)
        return a + s[..., None] * (np.array(self.rgb_b) - a)

    def to_dict(self):
        return {
            "type": "gradient",
            "axis": list(self.axis),
            "lo": self.lo,
            "hi": self.hi,
            "rgb_a": list(self.rgb_a),
            "rgb_b": list(self.rgb_b),
        }


# Shapes


def _bounds_planes(bounds):
    lo, hi = bounds
    return [(_AXES[k], lo[k], hi[k]) for k in range(3)]


def _convex_contains(points, planes):
    inside = np.ones(points.shape[0], dtype=bool)
    for normal, lo, hi in planes:
        proj = points @ normal
        inside &= (proj >= lo) & (proj <= hi)
    return inside


def _convex_entry(origins, dirs, planes):
    """Entry distance of rays into an intersection of slabs; inf on a miss."""
    n = origins.shape[0]
    t_enter = np.full(n, -np.inf)
    t_exit = np.full(n, np.inf)
    for normal, lo, hi in planes:
        on = origins @ normal
        dn = dirs @ normal
        parallel = np.abs(dn) < 1e-15
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (lo - on) / dn
            tb = (hi - on) / dn
        near = np.where(parallel, -np.inf, np.minimum(ta, tb))
        far = np.where(parallel, np.inf, np.maximum(ta, tb))
        far = np.where(parallel & ((on < lo) | (on > hi)), -np.inf, far)
        t_enter = np.maximum(t_enter, near)
        t_exit = np.minimum(t_exit, far)
    hit = (t_enter <= t_exit) & (t_exit >= 0.0)
    return np.where(hit, np.maximum(t_enter, 0.0), np.inf)


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center, "sphere center"))
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError(f"sphere radius must be > 0, got {self.radius!r}")

    def aabb(self):
        c = np.array(self.center)
        return c - self.radius, c + self.radius

    def contains(self, points, bounds):
        d = points - np.array(self.center)
        return (d * d).sum(axis=-1) <= self.radius * self.radius

    def entry(self, origins, dirs, bounds):
        oc = origins - np.array(self.center)
        b = (oc * dirs).sum(axis=-1)
        c = (oc * oc).sum(axis=-1) - self.radius * self.radius
        disc = b * b - c
        root = np.sqrt(np.maximum(disc, 0.0))
        t0 = -b - root
        t1 = -b + root
        hit = (disc >= 0.0) & (t1 >= 0.0)
        return np.where(hit, np.maximum(t0, 0.0), np.inf)

    def to_dict(self):
        return {"type": "sphere", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = _vec3(self.lo, "box min")
        hi = _vec3(self.hi, "box max")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"box min must be below box max, got {lo} / {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def aabb(self):
        return np.array(self.lo), np.array(self.hi)

    def planes(self, bounds):
        return [(_AXES[k], self.lo[k], self.hi[k]) for k in range(3)]

    def contains(self, points, bounds):
        return _convex_contains(points, self.planes(bounds))

    def entry(self, origins, dirs, bounds):
        return _convex_entry(origins, dirs, self.planes(bounds))

    def to_dict(self):
        return {"type": "box", "min": list(self.lo), "max": list(self.hi)}


@dataclass(frozen=True)
class Slab:
    """Points with offset <= normal·x <= offset + thickness, clipped to the scene bounds."""

    normal: tuple
    offset: float
    thickness: float

    def __post_init__(self):
        n = np.array(_vec3(self.normal, "slab normal"))
        norm = np.linalg.norm(n)
        if norm == 0:
            raise ValueError("slab normal must be non-zero")
        if not (self.thickness > 0 and math.isfinite(self.thickness)):
            raise ValueError(f"slab thickness must be > 0, got {self.thickness!r}")
        object.__setattr__(self, "normal", tuple(n / norm))

    def aabb(self):
        return None

    def planes(self, bounds):
        return [(np.array(self.normal), self.offset, self.offset + self.thickness)] + _bounds_planes(
            bounds
        )

    def contains(self, points, bounds):
        return _convex_contains(points, self.planes(bounds))

    def entry(self, origins, dirs, bounds):
        return _convex_entry(origins, dirs, self.planes(bounds))

    def to_dict(self):
        return {
            "type": "slab",
            "normal": list(self.normal),
            "offset": self.offset,
            "thickness": self.thickness,
        }


@dataclass(frozen=True)
class VolumePrimitive:
    shape: object
    density: float
    color: object = Constant((1.0, 1.0, 1.0))

    def __post_init__(self):
        density = float(self.density)
        if not (math.isfinite(density) and density >= 0):
            raise ValueError(f"density must be finite and >= 0, got {self.density!r}")
        object.__setattr__(self, "density", density)


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Dense density/color grid over an axis-aligned box, sampled trilinearly.

    density has shape (nx, ny, nz); color has shape (nx, ny, nz, 3). Sample
    [i, j, k] sits at lo + (i, j, k) / (n - 1) * (hi - lo).
    """

    density: np.ndarray
    color: np.ndarray
    lo: tuple
    hi: tuple

    def __post_init__(self):
        density = np.asarray(self.density, dtype=np.float64)
        color = np.asarray(self.color, dtype=np.float64)
        if density.ndim != 3 or min(density.shape) < 2:
            raise ValueError(f"grid density must be 3D with >= 2 samples per axis, got {density.shape}")
        if color.shape != density.shape + (3,):
            raise ValueError(f"grid color shape {color.shape} does not match density {density.shape}")
        if not np.all(np.isfinite(density)) or density.min() < 0:
            raise ValueError("grid density must be finite and >= 0")
        if color.min() < 0 or color.max() > 1:
            raise ValueError("grid colors must lie in [0, 1]")
        object.__setattr__(self, "density", density)
        object.__setattr__(self, "color", color)
        object.__setattr__(self, "lo", _vec3(self.lo, "grid min"))
        object.__setattr__(self, "hi", _vec3(self.hi, "grid max"))

    @classmethod
    def load(cls, path):
        """Load a grid from an .npz archive with density, color, lo and hi arrays."""
        with np.load(path, allow_pickle=False) as data:
            return cls(data["density"], data["color"], tuple(data["lo"]), tuple(data["hi"]))

    def sample(self, points):
        lo = np.array(self.lo)
        scale = (np.array(self.density.shape) - 1) / (np.array(self.hi) - lo)
        coords = ((points - lo) * scale).T
        sigma = map_coordinates(self.density, coords, order=1, mode="constant", cval=0.0)
        color = np.stack(
            [
                map_coordinates(self.color[..., c], coords, order=1, mode="constant", cval=0.0)
                for c in range(3)
            ],
            axis=-1,
        )
        return np.maximum(sigma, 0.0), np.clip(color, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class SceneModel:
    """Immutable volumetric scene: a density/color field inside axis-aligned bounds."""

    primitives: tuple
    bounds: tuple
    background_color: tuple = (0.0, 0.0, 0.0)
    grid: object = None

    def __post_init__(self):
        lo = _vec3(self.bounds[0], "bounds min")
        hi = _vec3(self.bounds[1], "bounds max")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"bounds min must be below bounds max, got {lo} / {hi}")
        object.__setattr__(self, "bounds", (lo, hi))
        object.__setattr__(self, "primitives", tuple(self.primitives))
        object.__setattr__(self, "background_color", _rgb(self.background_color, "background"))
        for i, prim in enumerate(self.primitives):
            box = prim.shape.aabb()
            if box is None:
                continue
            if np.any(box[0] < np.array(lo) - 1e-12) or np.any(box[1] > np.array(hi) + 1e-12):
                raise ValueError(f"primitive {i} ({type(prim.shape).__name__}) extends outside scene bounds")
        if self.grid is not None:
            if np.any(np.array(self.grid.lo) < np.array(lo)) or np.any(np.array(self.grid.hi) > np.array(hi)):
                raise ValueError("voxel grid extends outside scene bounds")

    @property
    def center(self):
        lo, hi = self.bounds
        return (np.array(lo) + np.array(hi)) / 2.0

    @property
    def diameter(self):
        lo, hi = self.bounds
        return float(np.linalg.norm(np.array(hi) - np.array(lo)))

    def field(self, points):
        return field_at(self, points)


def field_at(scene, x):
    """Density and color of the scene at one point (3,) or many points (N, 3).

    Densities of overlapping primitives add; the color is the density-weighted
    average of the contributing colors, or the background where density is 0.
    """
    pts = np.asarray(x, dtype=np.float64)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 3)
    n = pts.shape[0]
    sigma = np.zeros(n)
    weighted = np.zeros((n, 3))
    for prim in scene.primitives:
        if prim.density == 0:
            continue
        inside = prim.shape.contains(pts, scene.bounds)
        if not inside.any():
            continue
        sigma[inside] += prim.density
        weighted[inside] += prim.density * prim.color(pts[inside])
    if scene.grid is not None:
        g_sigma, g_color = scene.grid.sample(pts)
        sigma += g_sigma
        weighted += g_sigma[:, None] * g_color
    color = np.empty((n, 3))
    color[:] = scene.background_color
    nz = sigma > 0
    color[nz] = weighted[nz] / sigma[nz, None]
    if single:
        return float(sigma[0]), color[0]
    return sigma, color


def first_surface_depths(scene, origins, dirs):
    """Exact entry distance of each ray into the union of primitives (inf on a miss).

    Rays that start inside a primitive get 0. Zero-density primitives are
    ignored. Grid scenes have no closed form and are rejected.
    """
    if scene.grid is not None:
        raise ValueError("the analytic first-surface oracle is undefined for voxel-grid scenes")
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    best = np.full(origins.shape[0], np.inf)
    for prim in scene.primitives:
        if prim.density == 0:
            continue
        best = np.minimum(best, prim.shape.entry(origins, dirs, scene.bounds))
    return best


def analytic_first_surface(scene, origin, direction):
    """Entry depth t* of one ray, or None when it misses everything."""
    t = first_surface_depths(scene, origin, direction)[0]
    return None if math.isinf(t) else float(t)


# Cameras and poses


@dataclass(frozen=True)
class Camera:
    """Pinhole camera; pixel (u, v) is column u, row v, with its center at (u, v)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be > 0, got fx={self.fx} fy={self.fy}")
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValueError(f"resolution must be positive, got {self.width}x{self.height}")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )

    @property
    def shape(self):
        return (self.height, self.width)

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def K_inv(self):
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    def pixel_grid(self):
        """Float (u, v) coordinate maps of shape (H, W)."""
        v, u = np.mgrid[0 : self.height, 0 : self.width]
        return u.astype(np.float64), v.astype(np.float64)

    def unproject(self, u, v):
        """Camera-frame rays K⁻¹(u, v, 1) with unit z component, shape (..., 3)."""
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        return np.stack(
            [(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1
        )

    def project(self, points_cam):
        """Pixel coordinates (x, y) and depth z of camera-frame points."""
        p = np.asarray(points_cam, dtype=np.float64)
        z = p[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            x = self.fx * p[..., 0] / z + self.cx
            y = self.fy * p[..., 1] / z + self.cy
        return x, y, z

    def rays(self, pose, u=None, v=None):
        """World-space rays through pixel coordinates.

        Returns (origins, directions, cosines), each flattened over pixels;
        cosines are the z components of the unit camera-frame directions and
        convert ray distances into z-depths.
        """
        if u is None or v is None:
            u, v = self.pixel_grid()
        d_cam = self.unproject(u, v).reshape(-1, 3)
        norm = np.linalg.norm(d_cam, axis=-1)
        d_cam = d_cam / norm[:, None]
        dirs = d_cam @ pose.rotation.T
        origins = np.broadcast_to(pose.translation, dirs.shape)
        return origins, dirs, d_cam[:, 2]

    def to_dict(self):
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }


class Pose:
    """Rigid camera-to-world transform; camera axes are +x right, +y down, +z forward."""

    def __init__(self, rotation, translation):
        rotation = np.array(rotation, dtype=np.float64)
        translation = np.array(translation, dtype=np.float64).reshape(-1)
        if rotation.shape != (3, 3) or translation.shape != (3,):
            raise ValueError("pose needs a 3x3 rotation and a 3-vector translation")
        if np.abs(rotation.T @ rotation - np.eye(3)).max() > ORTHONORMAL_TOL:
            raise ValueError("pose rotation is not orthonormal")
        if abs(np.linalg.det(rotation) - 1.0) > ORTHONORMAL_TOL:
            raise ValueError("pose rotation must have determinant +1")
        rotation.setflags(write=False)
        translation.setflags(write=False)
        self.rotation = rotation
        self.translation = translation

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )

    def __repr__(self):
        return f"Pose(position={self.translation.tolist()})"

    @property
    def position(self):
        return self.translation

    @property
    def forward(self):
        return self.rotation[:, 2]

    def matrix(self):
        """The 3x4 camera-to-world matrix [R | t]."""
        return np.hstack([self.rotation, self.translation[:, None]])

    def inverse(self):
        r_t = self.rotation.T
        return Pose(r_t, -r_t @ self.translation)

    def to_world(self, points_cam):
        return np.asarray(points_cam) @ self.rotation.T + self.translation

    def to_camera(self, points_world):
        return (np.asarray(points_world) - self.translation) @ self.rotation

    def to_dict(self):
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(data["rotation"], data["translation"])


def look_at(position, target, up=(0.0, 1.0, 0.0)):
    """Pose at `position` whose optical axis passes through `target`.

    World `up` orients the image so it appears upward; when the view
    direction is parallel to it, world +x is used instead.
    """
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    dist = np.linalg.norm(forward)
    if dist == 0:
        raise ValueError("look_at position coincides with its target")
    forward = forward / dist
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(forward, _AXES[0])
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    return Pose(np.stack([right, down, forward], axis=1), position)


@dataclass(frozen=True)
class PosePairSpec:
    count: int
    orbit_radius_range: tuple
    elevation_range: tuple
    baseline_max: float
    rotation_jitter_max: float
    seed: int
    azimuth_range: tuple = (0.0, 2.0 * math.pi)

    def __post_init__(self):
        if int(self.count) < 1:
            raise ValueError(f"pose pair count must be >= 1, got {self.count}")
        r_min, r_max = (float(r) for r in self.orbit_radius_range)
        if not 0 < r_min <= r_max:
            raise ValueError(f"orbit radius range must satisfy 0 < min <= max, got {self.orbit_radius_range}")
        e_min, e_max = (float(e) for e in self.elevation_range)
        if not e_min <= e_max or max(abs(e_min), abs(e_max)) >= math.pi / 2:
            raise ValueError(f"elevation range must be ordered within (-pi/2, pi/2), got {self.elevation_range}")
        a_min, a_max = (float(a) for a in self.azimuth_range)
        if not a_min <= a_max:
            raise ValueError(f"azimuth range must be ordered, got {self.azimuth_range}")
        if not self.baseline_max >= 0:
            raise ValueError(f"baseline_max must be >= 0, got {self.baseline_max}")
        if not self.rotation_jitter_max >= 0:
            raise ValueError(f"rotation_jitter_max must be >= 0, got {self.rotation_jitter_max}")
        object.__setattr__(self, "count", int(self.count))
        object.__setattr__(self, "orbit_radius_range", (r_min, r_max))
        object.__setattr__(self, "elevation_range", (e_min, e_max))
        object.__setattr__(self, "azimuth_range", (a_min, a_max))
        object.__setattr__(self, "seed", int(self.seed))

    def to_dict(self):
        return {
            "count": self.count,
            "orbit_radius_range": list(self.orbit_radius_range),
            "elevation_range": list(self.elevation_range),
            "azimuth_range": list(self.azimuth_range),
            "baseline_max": self.baseline_max,
            "rotation_jitter_max": self.rotation_jitter_max,
            "seed": self.seed,
        }


def _inside_geometry(scene, position):
    sigma, _ = field_at(scene, position)
    return sigma > 0


def _draw_pair(rng, spec, center):
    # Every draw happens even when a range is degenerate, so the stream never shifts.
    radius = rng.uniform(*spec.orbit_radius_range)
    elevation = rng.uniform(*spec.elevation_range)
    azimuth = rng.uniform(*spec.azimuth_range)
    offset_dir = rng.standard_normal(3)
    offset_u = rng.uniform()
    jitter_axis = rng.standard_normal(3)
    jitter_u = rng.uniform()

    orbit = np.array(
        [
            math.cos(elevation) * math.sin(azimuth),
            math.sin(elevation),
            math.cos(elevation) * math.cos(azimuth),
        ]
    )
    first = look_at(center + radius * orbit, center)

    norm = np.linalg.norm(offset_dir)
    step = offset_dir / norm if norm > 0 else np.zeros(3)
    position = first.position + spec.baseline_max * offset_u ** (1.0 / 3.0) * step
    aimed = look_at(position, center)

    angle = spec.rotation_jitter_max * jitter_u
    axis_norm = np.linalg.norm(jitter_axis)
    if angle == 0 or axis_norm == 0:
        return first, aimed
    jitter = Rotation.from_rotvec(jitter_axis / axis_norm * angle).as_matrix()
    return first, Pose(aimed.rotation @ jitter, aimed.translation)


def sample_pose_pairs(spec, scene_center, scene=None):
    """Sample spec.count center-facing pose pairs.

    The first pose of each pair orbits scene_center at a uniform radius,
    elevation and azimuth. The second is displaced by a random vector no longer
    than baseline_max, re-aimed at the center, then rotated by at most
    rotation_jitter_max radians. With a scene, pairs that put a camera inside
    geometry are redrawn up to MAX_POSE_ATTEMPTS times.
    """
    center = np.asarray(scene_center, dtype=np.float64)
    rng = np.random.default_rng(spec.seed)
    pairs = []
    for index in range(spec.count):
        for _ in range(MAX_POSE_ATTEMPTS):
            first, second = _draw_pair(rng, spec, center)
            if scene is None:
                break
            if not (
                _inside_geometry(scene, first.position) or _inside_geometry(scene, second.position)
            ):
                break
        else:
            raise PoseSamplingError(MAX_POSE_ATTEMPTS, first.position)
        pairs.append((first, second))
    log.debug("sampled %d pose pairs (seed %d)", len(pairs), spec.seed)
    return pairs
