# ABOUTME: JSON configuration for scenes and pipeline runs, validated into immutable model objects.
# ABOUTME: Unknown keys and bad values raise ConfigError naming the dotted key path.

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from flowfactory.helpers import FactoryError, read_json
from flowfactory.masks import FilterConfig
from flowfactory.render import RaySamplingConfig
from flowfactory.scene import (
    Box,
    Camera,
    Checkerboard,
    Constant,
    Gradient,
    PosePairSpec,
    SceneModel,
    Slab,
    Sphere,
    VolumePrimitive,
    VoxelGrid,
)

DEFAULT_INTERVALS = 256


class ConfigError(FactoryError):
    """Invalid configuration; `key` is the dotted path of the offending entry."""

    def __init__(self, message, path=None, key=None):
        self.path = None if path is None else str(path)
        self.key = key
        where = f"{key}: " if key else ""
        super().__init__(f"{where}{message}")

    def fields(self):
        return {"path": self.path, "key": self.key}


@dataclass(frozen=True, eq=False)
class SceneConfig:
    scene: SceneModel
    camera: Camera
    pose_pairs: PosePairSpec
    scene_center: np.ndarray
    raw: dict
    base_dir: str = "."


@dataclass(frozen=True, eq=False)
class PipelineConfig:
    scene_config: SceneConfig
    sampling: RaySamplingConfig
    filter: FilterConfig
    seed: int
    workers: int = 1
    out: Path = None
    raw: dict = None

    @property
    def quantiles(self):
        return self.filter.quantiles

    @property
    def n_foreground(self):
        return self.filter.n_foreground


class _Reader:
    """Walks a parsed JSON object, tracking the dotted key path for errors."""

    def __init__(self, source, prefix=""):
        self.source = source
        self.prefix = prefix

    def fail(self, key, message):
        raise ConfigError(message, self.source, _join(self.prefix, key) if key else self.prefix or None)

    def obj(self, value, key, allowed, required=()):
        if not isinstance(value, dict):
            self.fail(key, f"expected an object, got {type(value).__name__}")
        for name in sorted(value):
            if name not in allowed:
                self.fail(_join(key, name), "unknown key")
        for name in required:
            if name not in value:
                self.fail(_join(key, name), "required key is missing")
        return value

    def number(self, value, key):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            self.fail(key, f"expected a finite number, got {value!r}")
        return float(value)

    def integer(self, value, key):
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(key, f"expected an integer, got {value!r}")
        return value

    def boolean(self, value, key):
        if not isinstance(value, bool):
            self.fail(key, f"expected true or false, got {value!r}")
        return value

    def vector(self, value, key, n=3):
        if not isinstance(value, list) or len(value) != n:
            self.fail(key, f"expected a list of {n} numbers, got {value!r}")
        return tuple(self.number(v, f"{key}[{i}]") for i, v in enumerate(value))

    def build(self, key, factory, *args):
        try:
            return factory(*args)
        except (ValueError, TypeError) as exc:
            self.fail(key, str(exc))


def _join(prefix, name):
    return f"{prefix}.{name}" if prefix else name


_COLOR_KEYS = {
    "constant": ("rgb",),
    "checker": ("scale", "rgb_a", "rgb_b"),
    "gradient": ("axis", "lo", "hi", "rgb_a", "rgb_b"),
}
_SHAPE_KEYS = {
    "sphere": ("center", "radius"),
    "box": ("min", "max"),
    "slab": ("normal", "offset", "thickness"),
}


def _color(r, data, key):
    kind = r.obj(data, key, {"type"} | {k for keys in _COLOR_KEYS.values() for k in keys}, ("type",))["type"]
    if kind not in _COLOR_KEYS:
        r.fail(_join(key, "type"), f"unknown color type {kind!r}")
    r.obj(data, key, {"type", *_COLOR_KEYS[kind]}, _COLOR_KEYS[kind])
    if kind == "constant":
        return r.build(key, Constant, r.vector(data["rgb"], _join(key, "rgb")))
    if kind == "checker":
        return r.build(
            key,
            Checkerboard,
            r.number(data["scale"], _join(key, "scale")),
            r.vector(data["rgb_a"], _join(key, "rgb_a")),
            r.vector(data["rgb_b"], _join(key, "rgb_b")),
        )
    return r.build(
        key,
        Gradient,
        r.vector(data["axis"], _join(key, "axis")),
        r.number(data["lo"], _join(key, "lo")),
        r.number(data["hi"], _join(key, "hi")),
        r.vector(data["rgb_a"], _join(key, "rgb_a")),
        r.vector(data["rgb_b"], _join(key, "rgb_b")),
    )


def _shape(r, data, key):
    kind = r.obj(data, key, {"type"} | {k for keys in _SHAPE_KEYS.values() for k in keys}, ("type",))["type"]
    if kind not in _SHAPE_KEYS:
        r.fail(_join(key, "type"), f"unknown shape type {kind!r}")
    r.obj(data, key, {"type", *_SHAPE_KEYS[kind]}, _SHAPE_KEYS[kind])
    if kind == "sphere":
        return r.build(
            key, Sphere, r.vector(data["center"], _join(key, "center")), r.number(data["radius"], _join(key, "radius"))
        )
    if kind == "box":
        return r.build(key, Box, r.vector(data["min"], _join(key, "min")), r.vector(data["max"], _join(key, "max")))
    return r.build(
        key,
        Slab,
        r.vector(data["normal"], _join(key, "normal")),
        r.number(data["offset"], _join(key, "offset")),
        r.number(data["thickness"], _join(key, "thickness")),
    )


def _primitive(r, data, key):
    r.obj(data, key, {"shape", "density", "color"}, ("shape", "density"))
    shape = _shape(r, data["shape"], _join(key, "shape"))
    density = r.number(data["density"], _join(key, "density"))
    if "color" in data:
        return r.build(key, VolumePrimitive, shape, density, _color(r, data["color"], _join(key, "color")))
    return r.build(key, VolumePrimitive, shape, density)


def _camera(r, data, key):
    names = ("fx", "fy", "cx", "cy", "width", "height")
    r.obj(data, key, set(names), names)
    return r.build(
        key,
        Camera,
        r.number(data["fx"], _join(key, "fx")),
        r.number(data["fy"], _join(key, "fy")),
        r.number(data["cx"], _join(key, "cx")),
        r.number(data["cy"], _join(key, "cy")),
        r.integer(data["width"], _join(key, "width")),
        r.integer(data["height"], _join(key, "height")),
    )


def _pose_pairs(r, data, key, default_seed):
    required = ("count", "orbit_radius_range", "elevation_range", "baseline_max", "rotation_jitter_max")
    r.obj(data, key, set(required) | {"azimuth_range", "seed"}, required)
    seed = data.get("seed", default_seed)
    if seed is None:
        r.fail(_join(key, "seed"), "required key is missing (no pipeline seed to inherit)")
    extra = {}
    if "azimuth_range" in data:
        extra["azimuth_range"] = r.vector(data["azimuth_range"], _join(key, "azimuth_range"), 2)
    return r.build(
        key,
        PosePairSpec,
        r.integer(data["count"], _join(key, "count")),
        r.vector(data["orbit_radius_range"], _join(key, "orbit_radius_range"), 2),
        r.vector(data["elevation_range"], _join(key, "elevation_range"), 2),
        r.number(data["baseline_max"], _join(key, "baseline_max")),
        r.number(data["rotation_jitter_max"], _join(key, "rotation_jitter_max")),
        r.integer(seed, _join(key, "seed")),
        *extra.values(),
    )


def parse_scene_config(obj, base_dir=".", default_seed=None, source=None, prefix=""):
    """Build a SceneConfig from a parsed scene JSON object.

    Args:
        obj: the parsed object.
        base_dir: directory that relative grid paths are resolved against.
        default_seed: pose-pair seed used when the scene omits one.
        source: file name reported in errors.
        prefix: key path of obj inside an enclosing config ("scene" when inline).
    """
    r = _Reader(source, prefix)
    allowed = {"bounds", "background", "scene_center", "primitives", "grid", "camera", "pose_pairs"}
    r.obj(obj, "", allowed, ("bounds", "camera", "pose_pairs"))
    bounds = obj["bounds"]
    if not isinstance(bounds, list) or len(bounds) != 2:
        r.fail("bounds", "expected [[xmin, ymin, zmin], [xmax, ymax, zmax]]")
    lo = r.vector(bounds[0], "bounds[0]")
    hi = r.vector(bounds[1], "bounds[1]")
    primitives = obj.get("primitives", [])
    if not isinstance(primitives, list):
        r.fail("primitives", "expected a list")
    prims = [_primitive(r, p, f"primitives[{i}]") for i, p in enumerate(primitives)]
    grid = None
    if "grid" in obj:
        r.obj(obj["grid"], "grid", {"path"}, ("path",))
        grid_path = Path(base_dir) / obj["grid"]["path"]
        try:
            grid = VoxelGrid.load(grid_path)
        except (OSError, KeyError, ValueError) as exc:
            r.fail("grid.path", f"cannot load voxel grid {grid_path}: {exc}")
    background = r.vector(obj["background"], "background") if "background" in obj else (0.0, 0.0, 0.0)
    scene = r.build("", SceneModel, prims, (lo, hi), background, grid)
    center = np.array(r.vector(obj["scene_center"], "scene_center")) if "scene_center" in obj else scene.center
    return SceneConfig(
        scene=scene,
        camera=_camera(r, obj["camera"], "camera"),
        pose_pairs=_pose_pairs(r, obj["pose_pairs"], "pose_pairs", default_seed),
        scene_center=center,
        raw=obj,
        base_dir=str(Path(base_dir).resolve()),
    )


def _read(path):
    try:
        return read_json(path)
    except FileNotFoundError:
        raise ConfigError("file not found", path) from None
    except ValueError as exc:
        raise ConfigError(f"invalid JSON: {exc}", path) from None


def load_scene_config(path, default_seed=None):
    path = Path(path)
    return parse_scene_config(_read(path), path.parent, default_seed, path)


def _sampling(r, data, scene_config):
    r.obj(data, "sampling", {"t_near", "t_far", "n_intervals", "stratified"})
    n = r.integer(data.get("n_intervals", DEFAULT_INTERVALS), "sampling.n_intervals")
    stratified = r.boolean(data.get("stratified", False), "sampling.stratified")
    if "t_near" in data or "t_far" in data:
        if not ("t_near" in data and "t_far" in data):
            r.fail("sampling", "t_near and t_far must be given together")
        return r.build(
            "sampling",
            RaySamplingConfig,
            r.number(data["t_near"], "sampling.t_near"),
            r.number(data["t_far"], "sampling.t_far"),
            n,
            stratified,
        )
    return r.build(
        "sampling",
        RaySamplingConfig.for_scene,
        scene_config.scene,
        scene_config.pose_pairs,
        scene_config.scene_center,
        n,
        stratified,
    )


def _filter(r, data):
    r.obj(data, "filter", set(FilterConfig.__dataclass_fields__))
    values = {}
    for name, value in data.items():
        key = f"filter.{name}"
        if name.startswith("use_") or name == "occlusion_as_filter":
            values[name] = r.boolean(value, key)
        elif name == "n_foreground":
            values[name] = r.integer(value, key)
        else:
            values[name] = r.number(value, key)
    return r.build("filter", FilterConfig.from_dict, values)


def parse_pipeline_config(obj, base_dir=".", out=None, source=None):
    r = _Reader(source)
    r.obj(obj, "", {"scene", "seed", "sampling", "filter", "workers"}, ("scene", "seed"))
    seed = r.integer(obj["seed"], "seed")
    if seed < 0:
        r.fail("seed", f"seed must be >= 0, got {seed}")
    scene_obj = obj["scene"]
    if isinstance(scene_obj, str):
        scene_path = Path(base_dir) / scene_obj
        scene_config = parse_scene_config(_read(scene_path), scene_path.parent, seed, scene_path)
    else:
        scene_config = parse_scene_config(scene_obj, base_dir, seed, source, prefix="scene")
    workers = r.integer(obj.get("workers", 1), "workers")
    if workers < 1:
        r.fail("workers", f"workers must be >= 1, got {workers}")
    return PipelineConfig(
        scene_config=scene_config,
        sampling=_sampling(r, obj.get("sampling", {}), scene_config),
        filter=_filter(r, obj.get("filter", {})),
        seed=seed,
        workers=workers,
        out=None if out is None else Path(out),
        raw=obj,
    )


def load_pipeline_config(path, out=None):
    """Read a pipeline config file; a relative scene path is resolved next to it."""
    path = Path(path)
    return parse_pipeline_config(_read(path), path.parent, out, path)
