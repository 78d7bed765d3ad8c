# ABOUTME: On-disk dataset format: KITTI 16-bit flow PNGs, 8-bit images, binary masks, float32 maps.
# ABOUTME: Writes and verifies per-sample meta records with checksums, and keeps the sorted dataset manifest.

import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from flowfactory.flowgen import FlowField
from flowfactory.helpers import FactoryError, read_json, save_json, sha256_file

log = logging.getLogger(__name__)

SCHEMA = "flowfactory-dataset/1"
FLOW_SCALE = 64.0
FLOW_OFFSET = 2**15
FLOW_LIMIT = 511.98

RAW_MASKS = ("conf", "ssim", "dc", "ao")
BINARY_MASKS = ("conf", "ssim", "dc", "occ", "fg", "supervision")
DEPTHS = ("1", "2", "reproj")


class FormatError(FactoryError):
    def __init__(self, path, reason):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"{self.path}: {reason}")

    def fields(self):
        return {"path": self.path, "reason": self.reason}


class FlowRangeError(FactoryError):
    """Raised when a valid flow vector does not fit the 16-bit codec."""

    def __init__(self, pixel, value):
        self.pixel = pixel
        self.value = value
        super().__init__(
            f"flow {value} at pixel (u={pixel[0]}, v={pixel[1]}) exceeds ±{FLOW_LIMIT} px"
        )

    def fields(self):
        return {"pixel": list(self.pixel), "value": list(self.value)}


class SampleReadError(FactoryError):
    def __init__(self, path, reason="missing file"):
        self.path = str(path)
        self.reason = reason
        super().__init__(f"{self.path}: {reason}")

    def fields(self):
        return {"path": self.path, "reason": self.reason}


class ChecksumError(FactoryError):
    def __init__(self, path, expected, actual):
        self.path = str(path)
        self.expected = expected
        self.actual = actual
        super().__init__(f"{self.path}: checksum {actual} does not match recorded {expected}")

    def fields(self):
        return {"path": self.path, "expected": self.expected, "actual": self.actual}


class SchemaError(FactoryError):
    def __init__(self, found, path=None):
        self.found = found
        self.path = None if path is None else str(path)
        super().__init__(f"unsupported dataset schema {found!r} (expected {SCHEMA!r})")

    def fields(self):
        return {"found": self.found, "expected": SCHEMA, "path": self.path}


# Flow codec


def quantize_flow(flow):
    """Round a flow field to the codec's 1/64 px grid."""
    return FlowField(
        np.rint(flow.u * FLOW_SCALE) / FLOW_SCALE, np.rint(flow.v * FLOW_SCALE) / FLOW_SCALE, flow.valid
    )


def encode_flow_png(flow):
    """KITTI encoding: (round(64·u) + 2^15, round(64·v) + 2^15, valid) as uint16 RGB."""
    with np.errstate(invalid="ignore"):
        bad = flow.valid & ~((np.abs(flow.u) < FLOW_LIMIT) & (np.abs(flow.v) < FLOW_LIMIT))
    if bad.any():
        v, u = (int(i) for i in np.argwhere(bad)[0])
        raise FlowRangeError((u, v), (float(flow.u[v, u]), float(flow.v[v, u])))
    out = np.zeros(flow.shape + (3,), dtype=np.uint16)
    out[..., 0] = np.where(flow.valid, np.rint(flow.u * FLOW_SCALE) + FLOW_OFFSET, 0)
    out[..., 1] = np.where(flow.valid, np.rint(flow.v * FLOW_SCALE) + FLOW_OFFSET, 0)
    out[..., 2] = flow.valid
    return out


def decode_flow_png(image, path="<array>"):
    """Inverse of encode_flow_png; pixels with a zero valid channel are invalid."""
    image = np.asarray(image)
    if image.dtype != np.uint16:
        raise FormatError(path, f"flow PNG must be 16-bit, got {image.dtype}")
    if image.ndim != 3 or image.shape[2] != 3:
        raise FormatError(path, f"flow PNG must have 3 channels, got shape {image.shape}")
    valid = image[..., 2] != 0
    u = (image[..., 0].astype(np.float64) - FLOW_OFFSET) / FLOW_SCALE
    v = (image[..., 1].astype(np.float64) - FLOW_OFFSET) / FLOW_SCALE
    return FlowField(u, v, valid)


def _imwrite(path, image):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), image):
        raise FormatError(path, "could not write image")


def _imread(path):
    if not Path(path).is_file():
        raise SampleReadError(path)
    image = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if image is None:
        raise FormatError(path, "unreadable image")
    return image


def write_flow_png(path, flow):
    _imwrite(path, np.ascontiguousarray(encode_flow_png(flow)[..., ::-1]))


def read_flow_png(path):
    image = _imread(path)
    if image.ndim == 3:
        image = image[..., ::-1]
    return decode_flow_png(image, path)


def to_uint8(image):
    """Float RGB in [0, 1] to 8-bit."""
    return np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_image(path, rgb):
    rgb = np.asarray(rgb)
    if rgb.dtype != np.uint8:
        rgb = to_uint8(rgb)
    _imwrite(path, np.ascontiguousarray(rgb[..., ::-1]))


def read_image(path):
    image = _imread(path)
    if image.dtype != np.uint8 or image.ndim != 3 or image.shape[2] != 3:
        raise FormatError(path, f"expected 8-bit RGB, got {image.dtype} {image.shape}")
    return np.ascontiguousarray(image[..., ::-1])


def write_mask(path, mask):
    _imwrite(path, np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8))


def read_mask(path):
    image = _imread(path)
    if image.ndim != 2:
        raise FormatError(path, f"expected a single-channel mask, got shape {image.shape}")
    return image > 0


def write_map(path, values):
    """float32 .npy; the header carries dtype and dimensions."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.save(fh, np.asarray(values, dtype=np.float32), allow_pickle=False)


def read_map(path):
    if not Path(path).is_file():
        raise SampleReadError(path)
    try:
        values = np.load(path, allow_pickle=False)
    except ValueError as exc:
        raise FormatError(path, f"not a .npy array: {exc}") from exc
    if values.dtype != np.float32:
        raise FormatError(path, f"expected float32 map, got {values.dtype}")
    return values


# Samples


def sample_paths(sample_id):
    """Relative path of every file a sample owns, keyed by role."""
    paths = {
        "image_1": f"images/{sample_id}_1.png",
        "image_2": f"images/{sample_id}_2.png",
        "flow": f"flow/{sample_id}.png",
        "flow_raw": f"flow/{sample_id}_raw.png",
    }
    for name in RAW_MASKS:
        paths[f"raw_{name}"] = f"masks/{sample_id}_{name}.npy"
    for name in BINARY_MASKS:
        paths[f"mask_{name}"] = f"masks/{sample_id}_{name}.png"
    for name in DEPTHS:
        paths[f"depth_{name}"] = f"depth/{sample_id}_{name}.npy"
    return paths


def meta_path(root, sample_id):
    return Path(root) / "meta" / f"{sample_id}.json"


@dataclass(eq=False)
class DatasetSample:
    """Everything persisted for one pose pair.

    flow_raw is the full generated flow (valid = flow validity); flow_gt is
    the same field restricted to the supervision mask.
    """

    sample_id: str
    image_1: np.ndarray
    image_2: np.ndarray
    flow_raw: FlowField
    raw_masks: dict
    binary_masks: dict
    depths: dict
    meta: dict = field(default_factory=dict)

    @property
    def supervision(self):
        return self.binary_masks["supervision"]

    @property
    def flow_gt(self):
        return self.flow_raw.with_valid(self.supervision)

    @property
    def shape(self):
        return self.flow_raw.shape


def write_sample(sample, root):
    """Persist a sample under root and return its meta record."""
    root = Path(root)
    paths = sample_paths(sample.sample_id)
    write_image(root / paths["image_1"], sample.image_1)
    write_image(root / paths["image_2"], sample.image_2)
    write_flow_png(root / paths["flow"], sample.flow_gt)
    write_flow_png(root / paths["flow_raw"], sample.flow_raw)
    for name in RAW_MASKS:
        write_map(root / paths[f"raw_{name}"], sample.raw_masks[name])
    for name in BINARY_MASKS:
        write_mask(root / paths[f"mask_{name}"], sample.binary_masks[name])
    for name in DEPTHS:
        write_map(root / paths[f"depth_{name}"], sample.depths[name])
    record = {
        "schema": SCHEMA,
        "id": sample.sample_id,
        "files": {rel: sha256_file(root / rel) for rel in sorted(paths.values())},
        "meta": sample.meta,
    }
    save_json(meta_path(root, sample.sample_id), record)
    return record


def read_meta(root, sample_id):
    path = meta_path(root, sample_id)
    if not path.is_file():
        raise SampleReadError(path)
    try:
        record = read_json(path)
    except ValueError as exc:
        raise FormatError(path, f"invalid JSON: {exc}") from exc
    if record.get("schema") != SCHEMA:
        raise SchemaError(record.get("schema"), path)
    return record


def verify_files(root, record, keys=None):
    """Check existence and SHA-256 of the files a meta record lists."""
    root = Path(root)
    wanted = record["files"] if keys is None else {k: record["files"][k] for k in keys}
    for rel, expected in sorted(wanted.items()):
        path = root / rel
        if not path.is_file():
            raise SampleReadError(path)
        actual = sha256_file(path)
        if actual != expected:
            raise ChecksumError(path, expected, actual)


def read_sample(root, sample_id, verify=True):
    """Exact inverse of write_sample."""
    root = Path(root)
    record = read_meta(root, sample_id)
    paths = sample_paths(sample_id)
    for rel in paths.values():
        if rel not in record["files"]:
            raise SampleReadError(root / rel, "not listed in meta record")
    if verify:
        verify_files(root, record)
    flow_raw = read_flow_png(root / paths["flow_raw"])
    supervision = read_mask(root / paths["mask_supervision"])
    return DatasetSample(
        sample_id=sample_id,
        image_1=read_image(root / paths["image_1"]),
        image_2=read_image(root / paths["image_2"]),
        flow_raw=flow_raw,
        raw_masks={n: read_map(root / paths[f"raw_{n}"]) for n in RAW_MASKS},
        binary_masks={
            n: supervision if n == "supervision" else read_mask(root / paths[f"mask_{n}"])
            for n in BINARY_MASKS
        },
        depths={n: read_map(root / paths[f"depth_{n}"]) for n in DEPTHS},
        meta=record["meta"],
    )


def refresh_checksums(root, sample_id, rel_paths):
    """Re-hash rewritten files in a sample's meta record."""
    root = Path(root)
    record = read_meta(root, sample_id)
    for rel in rel_paths:
        record["files"][rel] = sha256_file(root / rel)
    save_json(meta_path(root, sample_id), record)
    return record


class Manifest:
    """Dataset-level index of samples, kept as manifest.json under the root.

    Entries may be added from several worker threads; the file is written
    with entries sorted by id so the bytes depend only on their content.

    Usage::

        manifest = Manifest(root)
        manifest.add({"id": "pair-0000", "retained_fraction": 0.81})
        manifest.save()
    """

    FILENAME = "manifest.json"

    def __init__(self, root, config=None):
        """Start an empty manifest under root; an existing file is replaced on save()."""
        self.root = Path(root)
        self.path = self.root / self.FILENAME
        self._lock = threading.Lock()
        self._state = {"schema": SCHEMA, "samples": []}
        if config is not None:
            self._state["config"] = config

    @classmethod
    def load(cls, root):
        """Open an existing manifest, rejecting a missing, unparsable or foreign file."""
        path = Path(root) / cls.FILENAME
        if not path.is_file():
            raise SampleReadError(path, "no dataset manifest")
        try:
            state = read_json(path)
        except ValueError:
            raise FormatError(path, "invalid JSON") from None
        if not isinstance(state, dict) or not isinstance(state.get("samples", []), list):
            raise FormatError(path, "not a manifest object")
        manifest = cls(root)
        manifest._state = state
        if manifest.schema != SCHEMA:
            raise SchemaError(manifest.schema, path)
        return manifest

    @property
    def schema(self):
        return self._state.get("schema")

    @property
    def config(self):
        return self._state.get("config", {})

    @config.setter
    def config(self, value):
        with self._lock:
            self._state["config"] = value

    @property
    def samples(self):
        return sorted(self._state.get("samples", []), key=lambda s: s["id"])

    def ids(self):
        return [s["id"] for s in self.samples]

    def get(self, sample_id):
        for entry in self._state.get("samples", []):
            if entry["id"] == sample_id:
                return entry
        return None

    def add(self, entry):
        """Insert or replace the entry with entry["id"]."""
        with self._lock:
            samples = [s for s in self._state.setdefault("samples", []) if s["id"] != entry["id"]]
            samples.append(entry)
            self._state["samples"] = samples

    def save(self):
        with self._lock:
            state = dict(self._state, schema=SCHEMA)
            state["samples"] = sorted(state.get("samples", []), key=lambda s: s["id"])
            state["count"] = len(state["samples"])
            save_json(self.path, state)
        log.debug("manifest: %d samples written to %s", state["count"], self.path)
