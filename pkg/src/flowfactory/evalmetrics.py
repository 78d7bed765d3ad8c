# ABOUTME: Evaluation metrics for flow and depth-change predictions: EPE, Fl-all, Mid_error, zero-shot losses.
# ABOUTME: Pure functions over arrays; reports aggregate per-sample results into dataset means.

import math
from dataclasses import dataclass

import numpy as np

from flowfactory.flowgen import backward_warp
from flowfactory.helpers import FactoryError
from flowfactory.masks import ssim_map

OUTLIER_PX = 3.0
OUTLIER_REL = 0.05
MID_ERROR_SCALE = 1e4
FL_ALL_RULES = ("and", "or")


class MetricError(FactoryError):
    def __init__(self, message, metric=None):
        self.metric = metric
        super().__init__(message)

    def fields(self):
        return {"metric": self.metric}


@dataclass(frozen=True)
class FlowMetricsReport:
    fl_epe: float
    fl_all: float
    pixel_count: int

    def to_dict(self):
        return {"fl_epe": self.fl_epe, "fl_all": self.fl_all, "pixel_count": self.pixel_count}


@dataclass(frozen=True)
class DepthRatioReport:
    mid_error: float
    pixel_count: int

    def to_dict(self):
        return {"mid_error": self.mid_error, "pixel_count": self.pixel_count}


def _eval_mask(shape, valid, eval_mask):
    mask = valid if eval_mask is None else np.asarray(eval_mask, dtype=bool) & valid
    if mask.shape != shape:
        raise ValueError(f"evaluation mask shape {mask.shape} does not match {shape}")
    return mask


def outliers(err, gt_magnitude, rule="and"):
    """KITTI outlier test: err > 3 px and err > 5 % of |gt| (or either, with rule="or")."""
    if rule not in FL_ALL_RULES:
        raise ValueError(f"Fl-all rule must be one of {FL_ALL_RULES}, got {rule!r}")
    absolute = err > OUTLIER_PX
    relative = err > OUTLIER_REL * gt_magnitude
    return absolute & relative if rule == "and" else absolute | relative


def flow_epe_all(pred, gt, eval_mask=None, rule="and"):
    """Mean end-point error and Fl-all percentage over eval_mask ∩ gt.valid."""
    if pred.shape != gt.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match ground truth {gt.shape}")
    mask = _eval_mask(gt.shape, gt.valid, eval_mask)
    count = int(mask.sum())
    if count == 0:
        raise MetricError("evaluation mask selects no pixels", "flow_epe_all")
    err = np.hypot(pred.u - gt.u, pred.v - gt.v)[mask]
    bad = outliers(err, gt.magnitude[mask], rule)
    return FlowMetricsReport(float(err.mean()), 100.0 * float(bad.mean()), count)


def depth_change_ratio(z1, z2):
    """τ = z2 / z1 per pixel; NaN wherever either depth is missing or non-positive."""
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        ok = np.isfinite(z1) & np.isfinite(z2) & (z1 > 0) & (z2 > 0)
        return np.where(ok, z2 / z1, np.nan)


def mid_error(tau_pred, tau_gt, eval_mask=None):
    """Mean |ln τ − ln τ_GT| over the mask, scaled by 10⁴."""
    tau_pred = np.asarray(tau_pred, dtype=np.float64)
    tau_gt = np.asarray(tau_gt, dtype=np.float64)
    if tau_pred.shape != tau_gt.shape:
        raise ValueError(f"τ maps differ in shape: {tau_pred.shape} vs {tau_gt.shape}")
    defined = np.isfinite(tau_pred) & np.isfinite(tau_gt)
    mask = _eval_mask(tau_gt.shape, defined, eval_mask)
    count = int(mask.sum())
    if count == 0:
        raise MetricError("evaluation mask selects no pixels", "mid_error")
    pred, gt = tau_pred[mask], tau_gt[mask]
    if (pred <= 0).any() or (gt <= 0).any():
        raise MetricError("depth-change ratios must be positive on the evaluation mask", "mid_error")
    return DepthRatioReport(float(np.abs(np.log(pred) - np.log(gt)).mean()) * MID_ERROR_SCALE, count)


def _as_unit_image(image):
    image = np.asarray(image)
    if image.dtype == np.uint8:
        return image.astype(np.float64) / 255.0
    return image.astype(np.float64)


def zero_shot_losses(I_i, I_j, flow, occ, region=None):
    """Occlusion-masked SSIM and photometric losses of I_j warped back onto I_i.

    Both are means over sampled, non-occluded pixels (restricted to `region`
    when given). s_loss is 1 − SSIM in [0, 1]; p_loss is the mean absolute
    difference on a 0–255 scale. Returns (nan, nan) when no pixel qualifies.
    """
    I_i = _as_unit_image(I_i)
    I_j = _as_unit_image(I_j)
    if I_i.shape != I_j.shape:
        raise ValueError(f"image shapes differ: {I_i.shape} vs {I_j.shape}")
    warped, sampled = backward_warp(I_j, flow)
    keep = sampled & ~occ.occluded
    if region is not None:
        keep &= np.asarray(region, dtype=bool)
    if not keep.any():
        return math.nan, math.nan
    both = sampled[..., None] if I_i.ndim == 3 else sampled
    source = np.where(both, I_i, 0.0)
    s = np.clip(1.0 - ssim_map(source, warped), 0.0, 1.0)
    diff = np.abs(source - warped)
    if diff.ndim == 3:
        diff = diff.mean(axis=-1)
    return float(s[keep].mean()), float(diff[keep].mean() * 255.0)


def mean_reports(reports):
    """Dataset aggregate: per-sample means averaged over samples, pixel counts summed."""
    reports = list(reports)
    if not reports:
        raise MetricError("no samples to aggregate")
    kind = type(reports[0])
    count = sum(r.pixel_count for r in reports)
    if kind is FlowMetricsReport:
        return FlowMetricsReport(
            float(np.mean([r.fl_epe for r in reports])), float(np.mean([r.fl_all for r in reports])), count
        )
    return DepthRatioReport(float(np.mean([r.mid_error for r in reports])), count)
