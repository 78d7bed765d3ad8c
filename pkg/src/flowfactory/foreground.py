# ABOUTME: Bézier-outlined foreground floaters composited over both frames with a homography motion.
# ABOUTME: Overrides flow, occlusion and supervision inside floater footprints; zero floaters is the identity.

import logging
import math
from dataclasses import dataclass

import numpy as np

from flowfactory.flowgen import FlowField, OcclusionMask
from flowfactory.masks import FilterConfig, FilteredLabel, combine_criteria, tally

log = logging.getLogger(__name__)

FLATNESS_PX = 0.25
MAX_SUBDIVISION = 16
MAX_FLOATER_ATTEMPTS = 100
DET_MIN = 1e-9

DISK_FRACTION = 0.25
MAX_ROTATION = math.radians(15.0)
SCALE_RANGE = (0.9, 1.1)
TRANSLATION_FRACTION = 0.1
# Projective terms, per pixel of min(H, W).
PERSPECTIVE_JITTER = 0.05


@dataclass(frozen=True)
class Texture:
    """Constant color, or a linear ramp from rgb_a at `start` to rgb_b at `end`.

    Points are normalized image coordinates of frame 1.
    """

    rgb_a: tuple
    rgb_b: tuple = None
    start: tuple = (0.0, 0.0)
    end: tuple = (1.0, 0.0)

    @property
    def kind(self):
        return "constant" if self.rgb_b is None else "gradient"

    def __call__(self, points):
        a = np.array(self.rgb_a, dtype=np.float64)
        if self.rgb_b is None:
            return np.broadcast_to(a, points.shape[:-1] + (3,))
        start = np.array(self.start, dtype=np.float64)
        axis = np.array(self.end, dtype=np.float64) - start
        length2 = float(axis @ axis)
        s = np.clip((points - start) @ axis / length2, 0.0, 1.0) if length2 > 0 else np.zeros(points.shape[:-1])
        return a + s[..., None] * (np.array(self.rgb_b) - a)

    def to_dict(self):
        if self.rgb_b is None:
            return {"type": "constant", "rgb": list(self.rgb_a)}
        return {
            "type": "gradient",
            "rgb_a": list(self.rgb_a),
            "rgb_b": list(self.rgb_b),
            "start": list(self.start),
            "end": list(self.end),
        }

    @classmethod
    def from_dict(cls, data):
        if data["type"] == "constant":
            return cls(tuple(data["rgb"]))
        return cls(tuple(data["rgb_a"]), tuple(data["rgb_b"]), tuple(data["start"]), tuple(data["end"]))


@dataclass(frozen=True, eq=False)
class Floater:
    """Closed curve of k cubic Bézier segments with its frame-1 → frame-2 homography.

    segments has shape (k, 4, 2) in normalized (x / W, y / H) coordinates;
    homography maps normalized frame-1 points to normalized frame-2 points.
    Smaller depth_order is nearer.
    """

    segments: np.ndarray
    texture: Texture
    homography: np.ndarray
    depth_order: int = 0

    def __post_init__(self):
        segments = np.asarray(self.segments, dtype=np.float64)
        if segments.ndim != 3 or segments.shape[1:] != (4, 2) or not 3 <= segments.shape[0] <= 6:
            raise ValueError(f"floater needs 3 to 6 cubic segments of shape (4, 2), got {segments.shape}")
        for i in range(segments.shape[0]):
            if not np.array_equal(segments[i, 3], segments[(i + 1) % segments.shape[0], 0]):
                raise ValueError(f"floater outline is not closed at segment {i}")
        homography = np.asarray(self.homography, dtype=np.float64)
        if homography.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got {homography.shape}")
        if abs(np.linalg.det(homography)) <= DET_MIN:
            raise ValueError("floater homography is singular")
        object.__setattr__(self, "segments", segments)
        object.__setattr__(self, "homography", homography)
        object.__setattr__(self, "depth_order", int(self.depth_order))

    def pixel_segments(self, size):
        height, width = size
        return self.segments * np.array([width, height], dtype=np.float64)

    def pixel_homography(self, size):
        """The homography in pixel coordinates of an image of `size` (H, W)."""
        height, width = size
        scale = np.diag([float(width), float(height), 1.0])
        return scale @ self.homography @ np.diag([1.0 / width, 1.0 / height, 1.0])

    def to_dict(self):
        return {
            "segments": self.segments.tolist(),
            "texture": self.texture.to_dict(),
            "homography": self.homography.tolist(),
            "depth_order": self.depth_order,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            np.array(data["segments"]),
            Texture.from_dict(data["texture"]),
            np.array(data["homography"]),
            data["depth_order"],
        )


@dataclass(frozen=True, eq=False)
class CompositeResult:
    image_1: np.ndarray
    image_2: np.ndarray
    label: FilteredLabel
    occlusion: OcclusionMask
    flow_override: FlowField
    fg_mask_1: np.ndarray
    fg_mask_2: np.ndarray
    occlusion_update: np.ndarray


def apply_homography(H, x, y):
    """Map pixel coordinates through H; returns (x', y', w)."""
    w = H[2, 0] * x + H[2, 1] * y + H[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        xh = (H[0, 0] * x + H[0, 1] * y + H[0, 2]) / w
        yh = (H[1, 0] * x + H[1, 1] * y + H[1, 2]) / w
    return xh, yh, w


def _flat_enough(p):
    chord = p[3] - p[0]
    length = math.hypot(chord[0], chord[1])
    if length < 1e-12:
        return max(np.linalg.norm(p[1] - p[0]), np.linalg.norm(p[2] - p[0])) <= FLATNESS_PX
    for q in (p[1], p[2]):
        d = q - p[0]
        if abs(chord[0] * d[1] - chord[1] * d[0]) / length > FLATNESS_PX:
            return False
    return True


def _subdivide(p, depth, out):
    if depth >= MAX_SUBDIVISION or _flat_enough(p):
        out.append(p[3])
        return
    # de Casteljau split at t = 1/2
    p01 = (p[0] + p[1]) / 2
    p12 = (p[1] + p[2]) / 2
    p23 = (p[2] + p[3]) / 2
    p012 = (p01 + p12) / 2
    p123 = (p12 + p23) / 2
    mid = (p012 + p123) / 2
    _subdivide(np.array([p[0], p01, p012, mid]), depth + 1, out)
    _subdivide(np.array([mid, p123, p23, p[3]]), depth + 1, out)


def flatten_outline(segments_px):
    """Polyline of a closed Bézier outline, within FLATNESS_PX of the curve."""
    points = [segments_px[0, 0]]
    for segment in segments_px:
        _subdivide(segment, 0, points)
    return np.array(points[:-1])


def rasterize_polygon(vertices, size):
    """Even-odd scanline fill of a closed polygon in pixel coordinates.

    Pixel (u, v) is tested at its center. An edge crosses row v when
    y0 <= v < y1 (half-open in y); within a row, a span [x_a, x_b) covers
    centers with x_a <= u < x_b.
    """
    height, width = size
    mask = np.zeros((height, width), dtype=bool)
    if len(vertices) < 3:
        return mask
    p0 = np.asarray(vertices, dtype=np.float64)
    p1 = np.roll(p0, -1, axis=0)
    y_lo = np.minimum(p0[:, 1], p1[:, 1])
    y_hi = np.maximum(p0[:, 1], p1[:, 1])
    first = max(0, math.ceil(y_lo.min()))
    last = min(height - 1, math.ceil(y_hi.max()) - 1)
    columns = np.arange(width, dtype=np.float64)
    for v in range(first, last + 1):
        crosses = (y_lo <= v) & (v < y_hi)
        if not crosses.any():
            continue
        a, b = p0[crosses], p1[crosses]
        xs = np.sort(a[:, 0] + (v - a[:, 1]) * (b[:, 0] - a[:, 0]) / (b[:, 1] - a[:, 1]))
        mask[v] = np.searchsorted(xs, columns, side="right") % 2 == 1
    return mask


def rasterize_floater(floater, size, frame=1):
    """Boolean footprint of a floater in frame 1, or of its homography image in frame 2."""
    outline = flatten_outline(floater.pixel_segments(size))
    if frame == 2:
        x, y, _ = apply_homography(floater.pixel_homography(size), outline[:, 0], outline[:, 1])
        outline = np.stack([x, y], axis=-1)
    elif frame != 1:
        raise ValueError(f"frame must be 1 or 2, got {frame}")
    return rasterize_polygon(outline, size)


def _outline_segments(rng, center, radius, k):
    base = 2.0 * math.pi * np.arange(k) / k
    angles = base + rng.uniform(-0.3, 0.3, k) * (2.0 * math.pi / k)
    radii = radius * rng.uniform(0.5, 1.0, k)
    anchors = center + radii[:, None] * np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    tangents = np.stack([-np.sin(angles), np.cos(angles)], axis=-1)
    handle = radii * (4.0 / 3.0) * math.tan(math.pi / (2.0 * k))
    segments = np.empty((k, 4, 2))
    for i in range(k):
        j = (i + 1) % k
        segments[i] = [
            anchors[i],
            anchors[i] + handle[i] * tangents[i],
            anchors[j] - handle[j] * tangents[j],
            anchors[j],
        ]
    reach = np.linalg.norm(segments - center, axis=-1).max()
    if reach > radius:
        segments = center + (segments - center) * (radius / reach)
        for i in range(k):
            segments[i, 3] = segments[(i + 1) % k, 0]
    return segments


def _motion(rng, center, m):
    angle = rng.uniform(-MAX_ROTATION, MAX_ROTATION)
    scale = rng.uniform(*SCALE_RANGE)
    t_len = TRANSLATION_FRACTION * m * math.sqrt(rng.uniform())
    t_dir = rng.uniform(0.0, 2.0 * math.pi)
    persp = rng.uniform(-1.0, 1.0, 2) * PERSPECTIVE_JITTER / (m * m)

    cx, cy = center
    to_origin = np.array([[1.0, 0.0, -cx], [0.0, 1.0, -cy], [0.0, 0.0, 1.0]])
    back = np.array(
        [[1.0, 0.0, cx + t_len * math.cos(t_dir)], [0.0, 1.0, cy + t_len * math.sin(t_dir)], [0.0, 0.0, 1.0]]
    )
    c, s = math.cos(angle), math.sin(angle)
    similarity = np.array([[scale * c, -scale * s, 0.0], [scale * s, scale * c, 0.0], [0.0, 0.0, 1.0]])
    jitter = np.eye(3)
    jitter[2, :2] = persp
    return back @ similarity @ jitter @ to_origin


def _texture(rng, center, radius, size):
    height, width = size
    kind = rng.uniform()
    rgb_a = tuple(rng.uniform(0.0, 1.0, 3))
    rgb_b = tuple(rng.uniform(0.0, 1.0, 3))
    theta = rng.uniform(0.0, 2.0 * math.pi)
    if kind < 0.5:
        return Texture(rgb_a)
    d = radius * np.array([math.cos(theta), math.sin(theta)])
    norm = np.array([width, height], dtype=np.float64)
    return Texture(rgb_a, rgb_b, tuple((center - d) / norm), tuple((center + d) / norm))


def _overlaps_image(H, segments_px, size):
    height, width = size
    pts = segments_px.reshape(-1, 2)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    corners = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [lo[0], hi[1]], [hi[0], hi[1]]])
    x, y, w = apply_homography(H, corners[:, 0], corners[:, 1])
    if np.any(w <= 0):
        return False
    return x.max() >= 0 and x.min() <= width - 1 and y.max() >= 0 and y.min() <= height - 1


def sample_floaters(n, seed, size):
    """Draw n floaters for an image of `size` (H, W), deterministic per seed.

    Control points lie in a disk of radius at most 0.25 · min(H, W) around a
    uniform center. The motion is a similarity about that center (rotation
    within ±15°, scale in [0.9, 1.1], translation up to 0.1 · min(H, W))
    composed with a small projective jitter.
    """
    if n < 0:
        raise ValueError(f"floater count must be >= 0, got {n}")
    height, width = size
    m = float(min(height, width))
    norm = np.diag([1.0 / width, 1.0 / height, 1.0])
    denorm = np.diag([float(width), float(height), 1.0])
    rng = np.random.default_rng(seed)
    floaters = []
    for index in range(n):
        for _ in range(MAX_FLOATER_ATTEMPTS):
            center = np.array([rng.uniform(0.0, width), rng.uniform(0.0, height)])
            radius = DISK_FRACTION * m * rng.uniform(0.4, 1.0)
            k = int(rng.integers(3, 7))
            segments_px = _outline_segments(rng, center, radius, k)
            H = _motion(rng, center, m)
            texture = _texture(rng, center, radius, size)
            H_norm = norm @ H @ denorm
            if abs(np.linalg.det(H_norm)) > DET_MIN and _overlaps_image(H, segments_px, size):
                break
        else:
            raise ValueError(f"could not place floater {index} after {MAX_FLOATER_ATTEMPTS} attempts")
        segments = segments_px / np.array([width, height], dtype=np.float64)
        for i in range(k):
            segments[i, 3] = segments[(i + 1) % k, 0]
        floaters.append(Floater(segments, texture, H_norm, depth_order=index))
    return floaters


def composite(frames, label, occ, floaters, cfg=None):
    """Paint floaters into both frames and override labels inside them.

    Floaters are painted far to near. Frame-1 pixels inside a floater get
    the homography displacement as flow, are never occluded and are always
    supervised. Background pixels whose flow target lands on a frame-2
    floater become occluded, which also lets them bypass the SSIM check.
    """
    image_1, image_2 = frames
    shape = label.flow.shape
    if image_1.shape[:2] != shape or image_2.shape[:2] != shape or occ.occluded.shape != shape:
        raise ValueError(
            f"composite inputs disagree: images {image_1.shape[:2]}/{image_2.shape[:2]}, "
            f"flow {shape}, occlusion {occ.occluded.shape}"
        )
    if not floaters:
        blank = np.zeros(shape, dtype=bool)
        return CompositeResult(
            image_1, image_2, label, occ, FlowField.zeros(shape, valid=False), blank, blank.copy(), blank.copy()
        )
    cfg = cfg or FilterConfig(th_occ=occ.threshold)
    height, width = shape
    norm = np.array([width, height], dtype=np.float64)
    out_1 = np.array(image_1, dtype=np.float64, copy=True)
    out_2 = np.array(image_2, dtype=np.float64, copy=True)
    fg_1 = np.zeros(shape, dtype=bool)
    fg_2 = np.zeros(shape, dtype=bool)
    over_u = np.zeros(shape)
    over_v = np.zeros(shape)

    for floater in sorted(floaters, key=lambda f: f.depth_order, reverse=True):
        H = floater.pixel_homography(shape)
        mask_1 = rasterize_floater(floater, shape, frame=1)
        mask_2 = rasterize_floater(floater, shape, frame=2)

        v1, u1 = np.nonzero(mask_1)
        out_1[v1, u1] = floater.texture(np.stack([u1, v1], axis=-1) / norm)
        x, y, _ = apply_homography(H, u1.astype(np.float64), v1.astype(np.float64))
        over_u[v1, u1] = x - u1
        over_v[v1, u1] = y - v1

        v2, u2 = np.nonzero(mask_2)
        sx, sy, _ = apply_homography(np.linalg.inv(H), u2.astype(np.float64), v2.astype(np.float64))
        out_2[v2, u2] = floater.texture(np.stack([sx, sy], axis=-1) / norm)

        fg_1 |= mask_1
        fg_2 |= mask_2

    flow = label.flow
    rows, cols = np.mgrid[0:height, 0:width]
    tx = np.rint(cols + flow.u).astype(np.int64)
    ty = np.rint(rows + flow.v).astype(np.int64)
    inside = flow.valid & ~fg_1 & (tx >= 0) & (tx < width) & (ty >= 0) & (ty < height)
    update = np.zeros(shape, dtype=bool)
    update[inside] = fg_2[ty[inside], tx[inside]]

    ao = np.where(update, 1.0, occ.ao_values)
    ao = np.where(fg_1, 0.0, ao)
    occlusion = OcclusionMask.from_ao(ao, occ.threshold)

    new_flow = FlowField(
        np.where(fg_1, over_u, flow.u), np.where(fg_1, over_v, flow.v), flow.valid | fg_1
    )
    supervision = combine_criteria(new_flow.valid, label.criteria, occlusion.occluded, cfg, trusted=fg_1)
    counts = tally(new_flow.valid, label.criteria, occlusion.occluded, supervision)
    counts["foreground"] = int(fg_1.sum())
    log.debug("composited %d floaters: %d fg pixels, %d newly occluded", len(floaters), counts["foreground"], int(update.sum()))
    return CompositeResult(
        out_1,
        out_2,
        FilteredLabel(new_flow, supervision, label.criteria, counts),
        occlusion,
        FlowField(over_u, over_v, fg_1),
        fg_1,
        fg_2,
        update,
    )
