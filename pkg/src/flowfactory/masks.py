# ABOUTME: Credibility masks for generated flow labels: SSIM, radiance-field confidence, depth consistency.
# ABOUTME: Thresholds them into pass/fail criteria and produces the filtered supervision label.

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter, maximum_filter

from flowfactory.render import W_MIN, weight_quantile_depth

SSIM_SIGMA = 1.5
SSIM_WINDOW = 11
# Radius int(3.5 * 1.5 + 0.5) = 5 gives the 11x11 window.
SSIM_TRUNCATE = 3.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2

CRITERIA = ("conf", "ssim", "dc")


@dataclass(frozen=True)
class FilterConfig:
    """Thresholds for label filtering.

    A criterion passes where its map is strictly below its threshold. A
    disabled criterion, or one whose threshold is 1.0, passes every pixel.
    """

    th_conf: float = 0.3
    th_ssim: float = 0.1
    th_dc: float = 0.01
    th_occ: float = 0.3
    th_low: float = 0.1
    th_high: float = 0.9
    n_foreground: int = 2
    use_conf: bool = True
    use_ssim: bool = True
    use_dc: bool = True
    occlusion_as_filter: bool = False

    def __post_init__(self):
        for name in ("th_conf", "th_ssim", "th_dc", "th_occ"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and 0 < value <= 1):
                raise ValueError(f"{name} must lie in (0, 1], got {value!r}")
        if not 0 < self.th_low < self.th_high < 1:
            raise ValueError(
                f"CDF quantiles must satisfy 0 < th_low < th_high < 1, got {self.th_low}, {self.th_high}"
            )
        if int(self.n_foreground) != self.n_foreground or self.n_foreground < 0:
            raise ValueError(f"n_foreground must be a non-negative integer, got {self.n_foreground!r}")
        object.__setattr__(self, "n_foreground", int(self.n_foreground))

    @property
    def quantiles(self):
        return (self.th_low, self.th_high)

    def threshold(self, criterion):
        return getattr(self, f"th_{criterion}")

    def enabled(self, criterion):
        return getattr(self, f"use_{criterion}") and self.threshold(criterion) < 1.0

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown filter keys: {', '.join(unknown)}")
        return cls(**data)


@dataclass(frozen=True, eq=False)
class CredibilityMaps:
    """Raw M_ssim, M_conf and M_dc maps; NaN marks pixels where a map is undefined."""

    m_ssim: np.ndarray
    m_conf: np.ndarray
    m_dc: np.ndarray

    def get(self, criterion):
        return getattr(self, f"m_{criterion}")

    @property
    def valid(self):
        return {c: np.isfinite(self.get(c)) for c in CRITERIA}

    @property
    def shape(self):
        return self.m_conf.shape

    def as_float32(self):
        """Copy quantized to float32, the precision the maps are stored at."""
        return CredibilityMaps(
            *(np.asarray(m, dtype=np.float32) for m in (self.m_ssim, self.m_conf, self.m_dc))
        )


@dataclass(frozen=True, eq=False)
class FilteredLabel:
    """Flow plus the supervision mask selecting which labels enter the loss.

    criteria holds the raw per-criterion pass maps (before the occlusion
    bypass), so the mask can be recombined after compositing.
    """

    flow: object
    supervision_mask: np.ndarray
    criteria: dict
    counts: dict

    @property
    def flow_gt(self):
        return self.flow.with_valid(self.supervision_mask)

    @property
    def retained_fraction(self):
        total = self.counts.get("total", 0)
        return self.counts.get("retained", 0) / total if total else 0.0


def _blur(x):
    return gaussian_filter(x, sigma=SSIM_SIGMA, truncate=SSIM_TRUNCATE, mode="reflect")


def ssim_map(a, b):
    """Per-pixel SSIM of two images in [0, 1], averaged over channels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    total = np.zeros(a.shape[:2])
    for c in range(a.shape[2]):
        x, y = a[..., c], b[..., c]
        mu_x, mu_y = _blur(x), _blur(y)
        var_x = _blur(x * x) - mu_x * mu_x
        var_y = _blur(y * y) - mu_y * mu_y
        cov = _blur(x * y) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2)
        den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2)
        total += num / den
    return total / a.shape[2]


def ssim_mask(I_i, I_warped, sampled_valid=None):
    """M_ssim = 1 − SSIM(I_i, I_warped), clamped to [0, 1].

    NaN wherever the 11x11 window touches a sample that is not valid.
    """
    a = np.asarray(I_i, dtype=np.float64)
    b = np.asarray(I_warped, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if sampled_valid is None:
        sampled_valid = np.ones(a.shape[:2], dtype=bool)
    sampled_valid = np.asarray(sampled_valid, dtype=bool)
    if sampled_valid.shape != a.shape[:2]:
        raise ValueError(f"validity shape {sampled_valid.shape} does not match images {a.shape[:2]}")
    keep = sampled_valid[..., None] if a.ndim == 3 else sampled_valid
    a = np.where(keep, a, 0.0)
    b = np.where(keep, b, 0.0)
    m = np.clip(1.0 - ssim_map(a, b), 0.0, 1.0)
    touched = maximum_filter(~sampled_valid, size=SSIM_WINDOW, mode="constant", cval=False)
    return np.where(touched, np.nan, m)


def _rfc(t_lo, t_hi):
    with np.errstate(invalid="ignore", divide="ignore"):
        return (t_hi - t_lo) / (t_hi + t_lo)


def rfc_mask(view, th_low=0.1, th_high=0.9, w_min=W_MIN):
    """M_conf = (t_h − t_l) / (t_h + t_l) from the view's stored CDF quantiles."""
    levels = tuple(float(q) for q in view.quantile_levels)
    if levels != (float(th_low), float(th_high)):
        raise ValueError(f"view carries quantiles {levels}, not ({th_low}, {th_high})")
    m = _rfc(view.weight_quantile_lo, view.weight_quantile_hi)
    ok = (view.total_weight >= w_min) & np.isfinite(m)
    return np.where(ok, m, np.nan)


def rfc_from_profile(profile, th_low=0.1, th_high=0.9, w_min=W_MIN):
    """M_conf of a single weight profile (NaN when its weight is below w_min)."""
    t_lo = weight_quantile_depth(profile, th_low, w_min)
    t_hi = weight_quantile_depth(profile, th_high, w_min)
    value = _rfc(np.asarray(t_lo), np.asarray(t_hi))
    return float(value) if np.ndim(value) == 0 else value


def depth_consistency_mask(maps):
    """M_dc = |Z_j′ − Z_i′| / (Z_j′ + Z_i′); NaN where either depth is missing."""
    z_i = maps.depth_in_target
    z_j = maps.target_sampled_depth
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.abs(z_j - z_i) / (z_j + z_i)


def _passes(values, threshold, enabled):
    if not enabled:
        return np.ones(np.shape(values), dtype=bool)
    # float64 so float32-stored maps compare exactly as they did at generation time
    with np.errstate(invalid="ignore"):
        return np.asarray(values, dtype=np.float64) < threshold


def evaluate_criteria(cred, cfg):
    """Raw pass map per criterion; NaN never passes an enabled criterion."""
    return {c: _passes(cred.get(c), cfg.threshold(c), cfg.enabled(c)) for c in CRITERIA}


def combine_criteria(valid, criteria, occluded, cfg, trusted=None):
    """Supervision mask from pass maps.

    Occluded pixels skip the SSIM criterion (their warped appearance is
    meaningless) but still face M_conf and M_dc. Trusted pixels always pass.
    """
    keep = valid & criteria["conf"] & criteria["dc"] & (criteria["ssim"] | occluded)
    if cfg.occlusion_as_filter:
        keep &= ~occluded
    if trusted is not None:
        keep |= trusted
    return keep


def tally(valid, criteria, occluded, supervision):
    """Pixel counts for reporting; pass/fail counts are over flow-valid pixels."""
    effective = dict(criteria, ssim=criteria["ssim"] | occluded)
    n_valid = int(valid.sum())
    passed = {c: int((valid & effective[c]).sum()) for c in CRITERIA}
    return {
        "total": int(valid.size),
        "valid": n_valid,
        "occluded": int((valid & occluded).sum()),
        "retained": int(supervision.sum()),
        "pass": passed,
        "fail": {c: n_valid - passed[c] for c in CRITERIA},
    }


def filter_label(flow, cred, occ, cfg=None):
    """Apply the thresholded credibility masks to a flow field.

    supervision = valid ∧ (m_conf < th_conf) ∧ (m_ssim < th_ssim or occluded)
    ∧ (m_dc < th_dc), with M_occ as an extra hard filter when
    cfg.occlusion_as_filter is set.
    """
    cfg = cfg or FilterConfig()
    if not (flow.shape == cred.shape == occ.occluded.shape):
        raise ValueError(
            f"map shapes differ: flow {flow.shape}, masks {cred.shape}, occlusion {occ.occluded.shape}"
        )
    criteria = evaluate_criteria(cred, cfg)
    supervision = combine_criteria(flow.valid, criteria, occ.occluded, cfg)
    counts = tally(flow.valid, criteria, occ.occluded, supervision)
    return FilteredLabel(flow, supervision, criteria, counts)


def find_violations(supervision, valid, cred, occluded, cfg, trusted=None):
    """Pixel-by-pixel recheck of a supervision mask against the raw maps.

    Returns the (u, v) of every supervised pixel that fails an inequality.
    """
    trusted = np.zeros_like(valid) if trusted is None else trusted
    bad = []
    for v, u in zip(*np.nonzero(supervision)):
        if trusted[v, u]:
            continue
        ok = bool(valid[v, u])
        for c in CRITERIA:
            if not cfg.enabled(c) or (c == "ssim" and occluded[v, u]):
                continue
            value = float(cred.get(c)[v, u])
            ok = ok and not math.isnan(value) and value < cfg.threshold(c)
        if cfg.occlusion_as_filter and occluded[v, u]:
            ok = False
        if not ok:
            bad.append((int(u), int(v)))
    return bad


def explain_pixel(cred, occluded, valid, cfg, u, v, trusted=False):
    """Per-criterion verdict lines for one pixel, e.g. "fail: m_conf 0.4 ≥ 0.3"."""
    lines = [f"flow valid: {'yes' if valid else 'no'}"]
    for c in CRITERIA:
        value = float(cred.get(c)[v, u])
        threshold = cfg.threshold(c)
        if not cfg.enabled(c):
            verdict = "pass: disabled"
        elif c == "ssim" and occluded:
            verdict = f"pass: m_ssim bypassed (occluded), value {value:.4g}"
        elif math.isnan(value):
            verdict = f"fail: m_{c} undefined"
        elif value < threshold:
            verdict = f"pass: m_{c} {value:.4g} < {threshold:g}"
        else:
            verdict = f"fail: m_{c} {value:.4g} ≥ {threshold:g}"
        lines.append(f"{c}: {verdict}")
    lines.append(f"occluded: {'yes' if occluded else 'no'}")
    if trusted:
        lines.append("foreground: yes (label trusted)")
    return lines
