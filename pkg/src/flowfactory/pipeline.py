# ABOUTME: Orchestrates dataset generation, re-filtering, evaluation and per-pixel inspection.
# ABOUTME: Each pose pair runs render → reproject → masks → foreground → filter → persist.

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from flowfactory.config import ConfigError, parse_scene_config
from flowfactory.dataio import (
    Manifest,
    DatasetSample,
    SampleReadError,
    quantize_flow,
    read_flow_png,
    read_image,
    read_map,
    read_mask,
    read_meta,
    refresh_checksums,
    sample_paths,
    to_uint8,
    verify_files,
    write_flow_png,
    write_mask,
    write_sample,
)
from flowfactory.evalmetrics import (
    MetricError,
    depth_change_ratio,
    flow_epe_all,
    mean_reports,
    mid_error,
    zero_shot_losses,
)
from flowfactory.flowgen import (
    OcclusionMask,
    backward_warp,
    flow_from_reprojection,
    occlusion_from_ao,
    reproject,
)
from flowfactory.foreground import composite, sample_floaters
from flowfactory.helpers import FactoryError, fraction, save_json
from flowfactory.masks import (
    CRITERIA,
    CredibilityMaps,
    FilterConfig,
    combine_criteria,
    depth_consistency_mask,
    evaluate_criteria,
    explain_pixel,
    filter_label,
    rfc_from_profile,
    rfc_mask,
    ssim_mask,
    tally,
)
from flowfactory.render import RaySamplingConfig, format_profile, march_pixel, render_view, weight_quantile_depth
from flowfactory.scene import Camera, Pose, sample_pose_pairs

log = logging.getLogger(__name__)


def sample_id(index):
    return f"pair-{index:04d}"


def sample_seeds(seed, index):
    """(render_1, render_2, occlusion, floaters) seeds for one pose pair."""
    state = np.random.SeedSequence([seed, index]).generate_state(4)
    return tuple(int(s) for s in state)


def per_mask_fractions(counts):
    valid = counts["valid"]
    per_mask = {c: fraction(counts["pass"][c], valid) for c in CRITERIA}
    per_mask["occ"] = fraction(counts["occluded"], valid)
    return per_mask


def manifest_entry(sid, counts):
    return {
        "id": sid,
        "retained": counts["retained"],
        "total": counts["total"],
        "retained_fraction": fraction(counts["retained"], counts["total"]),
        "per_mask": per_mask_fractions(counts),
    }


class DataFactory:
    """Generates a dataset from a PipelineConfig.

    Samples run on a bounded thread pool; a failing sample is logged and
    skipped, and shows up in the summary's "failed" list.

    Usage::

        from flowfactory.config import load_pipeline_config
        from flowfactory.pipeline import DataFactory

        config = load_pipeline_config("run.json")
        summary = DataFactory(config, "out/").generate()
    """

    def __init__(self, config, out):
        self.config = config
        self.root = Path(out)

    @property
    def scene_config(self):
        return self.config.scene_config

    def manifest_config(self):
        sc = self.scene_config
        return {
            "seed": self.config.seed,
            "scene": sc.raw,
            "scene_dir": str(sc.base_dir),
            "scene_center": [float(c) for c in sc.scene_center],
            "camera": sc.camera.to_dict(),
            "sampling": self.config.sampling.to_dict(),
            "filter": self.config.filter.to_dict(),
        }

    def build_sample(self, index, pair):
        """Run the full label pipeline for one pose pair and return the DatasetSample."""
        cfg = self.config
        sc = self.scene_config
        scene, camera, sampling, filt = sc.scene, sc.camera, cfg.sampling, cfg.filter
        first, second = pair
        seeds = sample_seeds(cfg.seed, index)
        row_workers = cfg.workers if sc.pose_pairs.count == 1 else 1

        view_1 = render_view(scene, camera, first, sampling, seeds[0], cfg.quantiles, row_workers)
        view_2 = render_view(scene, camera, second, sampling, seeds[1], cfg.quantiles, row_workers)

        maps = reproject(view_1.midpoint_depth, camera, first, second, view_2.midpoint_depth)
        flow = flow_from_reprojection(maps)
        occ = occlusion_from_ao(scene, camera, second, maps, sampling, filt.th_occ, seeds[2])
        occ = OcclusionMask.from_ao(occ.ao_values.astype(np.float32), filt.th_occ)

        warped, sampled = backward_warp(view_2.rgb, flow)
        cred = CredibilityMaps(
            m_ssim=ssim_mask(view_1.rgb, warped, sampled),
            m_conf=rfc_mask(view_1, *cfg.quantiles),
            m_dc=depth_consistency_mask(maps),
        ).as_float32()
        label = filter_label(flow, cred, occ, filt)

        floaters = sample_floaters(cfg.n_foreground, seeds[3], camera.shape)
        comp = composite((view_1.rgb, view_2.rgb), label, occ, floaters, filt)
        counts = dict(comp.label.counts)
        counts.setdefault("foreground", 0)

        sid = sample_id(index)
        meta = {
            "index": index,
            "seed": cfg.seed,
            "seeds": {"render_1": seeds[0], "render_2": seeds[1], "occlusion": seeds[2], "floaters": seeds[3]},
            "poses": [first.to_dict(), second.to_dict()],
            "camera": camera.to_dict(),
            "sampling": sampling.to_dict(),
            "filter": filt.to_dict(),
            "floaters": [f.to_dict() for f in floaters],
            "counts": counts,
        }
        return DatasetSample(
            sample_id=sid,
            image_1=to_uint8(comp.image_1),
            image_2=to_uint8(comp.image_2),
            flow_raw=quantize_flow(comp.label.flow),
            raw_masks={
                "conf": cred.m_conf,
                "ssim": cred.m_ssim,
                "dc": cred.m_dc,
                "ao": comp.occlusion.ao_values.astype(np.float32),
            },
            binary_masks={
                "conf": label.criteria["conf"],
                "ssim": label.criteria["ssim"],
                "dc": label.criteria["dc"],
                "occ": comp.occlusion.occluded,
                "fg": comp.fg_mask_1,
                "supervision": comp.label.supervision_mask,
            },
            depths={
                "1": view_1.midpoint_depth.astype(np.float32),
                "2": view_2.midpoint_depth.astype(np.float32),
                "reproj": maps.depth_in_target.astype(np.float32),
            },
            meta=meta,
        )

    def _run_one(self, index, pair, manifest):
        sid = sample_id(index)
        try:
            sample = self.build_sample(index, pair)
            write_sample(sample, self.root)
        except (FactoryError, ValueError, OSError) as exc:
            log.error("sample %s failed: %s", sid, exc)
            return {"id": sid, "error": str(exc)}
        entry = manifest_entry(sid, sample.meta["counts"])
        manifest.add(entry)
        log.info("sample %s: retained %.1f%%", sid, 100.0 * entry["retained_fraction"])
        return None

    def generate(self):
        """Generate every pose pair; returns the run summary."""
        sc = self.scene_config
        pairs = sample_pose_pairs(sc.pose_pairs, sc.scene_center, sc.scene)
        self.root.mkdir(parents=True, exist_ok=True)
        manifest = Manifest(self.root, config=self.manifest_config())
        jobs = list(enumerate(pairs))
        if self.config.workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                results = list(pool.map(lambda job: self._run_one(job[0], job[1], manifest), jobs))
        else:
            results = [self._run_one(i, pair, manifest) for i, pair in jobs]
        manifest.save()
        failed = sorted((r for r in results if r), key=lambda r: r["id"])
        return summarize(manifest.samples, failed)


def summarize(samples, failed=()):
    retained = sum(s["retained"] for s in samples)
    total = sum(s["total"] for s in samples)
    per_mask = {}
    for name in CRITERIA + ("occ",):
        values = [s["per_mask"][name] for s in samples]
        per_mask[name] = float(np.mean(values)) if values else 0.0
    return {
        "samples": len(samples),
        "failed": list(failed),
        "retained_fraction": fraction(retained, total),
        "per_mask": per_mask,
        "per_sample": samples,
    }


def generate_dataset(config, out):
    return DataFactory(config, out).generate()


# Re-filtering


def refilter_sample(root, sid, cfg):
    """Recompute one sample's supervision from its stored raw maps.

    Returns (retained_before, retained_after, counts).
    """
    root = Path(root)
    record = read_meta(root, sid)
    paths = sample_paths(sid)
    needed = [paths[k] for k in ("flow_raw", "raw_conf", "raw_ssim", "raw_dc", "raw_ao", "mask_fg")]
    for rel in needed:
        if rel not in record["files"]:
            raise SampleReadError(root / rel, "raw mask not recorded")
    verify_files(root, record, needed)

    flow = read_flow_png(root / paths["flow_raw"])
    cred = CredibilityMaps(
        m_ssim=read_map(root / paths["raw_ssim"]),
        m_conf=read_map(root / paths["raw_conf"]),
        m_dc=read_map(root / paths["raw_dc"]),
    )
    occ = OcclusionMask.from_ao(read_map(root / paths["raw_ao"]), cfg.th_occ)
    fg = read_mask(root / paths["mask_fg"])

    criteria = evaluate_criteria(cred, cfg)
    supervision = combine_criteria(flow.valid, criteria, occ.occluded, cfg, trusted=fg)
    counts = tally(flow.valid, criteria, occ.occluded, supervision)
    counts["foreground"] = int(fg.sum())

    before = record["meta"].get("counts", {}).get("retained")
    write_flow_png(root / paths["flow"], flow.with_valid(supervision))
    for name in CRITERIA:
        write_mask(root / paths[f"mask_{name}"], criteria[name])
    write_mask(root / paths["mask_occ"], occ.occluded)
    write_mask(root / paths["mask_supervision"], supervision)
    rewritten = [paths[k] for k in ("flow", "mask_conf", "mask_ssim", "mask_dc", "mask_occ", "mask_supervision")]
    record = refresh_checksums(root, sid, rewritten)
    record["meta"]["filter"] = cfg.to_dict()
    record["meta"]["counts"] = counts
    save_json(root / "meta" / f"{sid}.json", record)
    return before, counts["retained"], counts


def refilter_dataset(root, changes=None):
    """Re-threshold every sample under root with the stored filter updated by `changes`."""
    manifest = Manifest.load(root)
    base = manifest.config.get("filter", {})
    try:
        cfg = FilterConfig.from_dict({**base, **(changes or {})})
    except ValueError as exc:
        raise ConfigError(str(exc), key="filter") from None
    rows = []
    for sid in manifest.ids():
        before, after, counts = refilter_sample(root, sid, cfg)
        manifest.add(manifest_entry(sid, counts))
        rows.append({"id": sid, "retained_before": before, "retained_after": after, "delta": after - (before or 0)})
    manifest.config = dict(manifest.config, filter=cfg.to_dict())
    manifest.save()
    total_before = sum(r["retained_before"] or 0 for r in rows)
    total_after = sum(r["retained_after"] for r in rows)
    return {
        "filter": cfg.to_dict(),
        "samples": rows,
        "retained_before": total_before,
        "retained_after": total_after,
        "delta": total_after - total_before,
    }


# Evaluation


def _flow_ids(directory):
    return sorted(p.stem for p in Path(directory).glob("*.png") if not p.stem.endswith("_raw"))


def _gt_source(gt):
    """(ids, flow path of id, dataset root or None) for a dataset root or a flat flow directory."""
    gt = Path(gt)
    if (gt / Manifest.FILENAME).is_file():
        manifest = Manifest.load(gt)
        return manifest.ids(), lambda sid: gt / sample_paths(sid)["flow"], gt
    if not gt.is_dir():
        raise SampleReadError(gt, "ground-truth directory not found")
    return _flow_ids(gt), lambda sid: gt / f"{sid}.png", None


def _dataset_extras(root, sid, pred, pred_dir, record):
    """Mid_error and zero-shot losses for one sample of a generated dataset."""
    paths = sample_paths(sid)
    row = {}
    tau_path = Path(pred_dir) / f"{sid}_tau.npy"
    if tau_path.is_file():
        tau_gt = depth_change_ratio(read_map(root / paths["depth_1"]), read_map(root / paths["depth_reproj"]))
        supervision = read_mask(root / paths["mask_supervision"])
        row["mid_error"] = mid_error(read_map(tau_path), tau_gt, supervision).mid_error
    th_occ = record["meta"].get("filter", {}).get("th_occ", FilterConfig().th_occ)
    occ = OcclusionMask.from_ao(read_map(root / paths["raw_ao"]), th_occ)
    fg = read_mask(root / paths["mask_fg"])
    image_1 = read_image(root / paths["image_1"])
    image_2 = read_image(root / paths["image_2"])
    for region, name in ((~fg, "bg"), (fg, "fg")):
        if region.any():
            s_loss, p_loss = zero_shot_losses(image_1, image_2, pred, occ, region)
            row[f"s_loss_{name}"] = s_loss
            row[f"p_loss_{name}"] = p_loss
    return row


def evaluate(pred_dir, gt, rule="and"):
    """Per-sample and mean flow metrics of predictions against ground truth.

    Predictions are KITTI flow PNGs named <id>.png. When gt is a dataset
    root, depth-change predictions <id>_tau.npy are scored with Mid_error and
    the zero-shot losses are reported for background and foreground.
    """
    ids, gt_path, root = _gt_source(gt)
    if not ids:
        raise MetricError(f"no ground-truth samples under {gt}", "eval")
    pred_dir = Path(pred_dir)
    missing = [sid for sid in ids if not (pred_dir / f"{sid}.png").is_file()]
    if missing:
        raise MetricError(f"prediction missing for samples: {', '.join(missing)}", "eval")
    rows, reports = [], []
    for sid in ids:
        pred = read_flow_png(pred_dir / f"{sid}.png")
        truth = read_flow_png(gt_path(sid))
        report = flow_epe_all(pred, truth, rule=rule)
        row = {"id": sid, **report.to_dict()}
        if root is not None:
            row.update(_dataset_extras(root, sid, pred, pred_dir, read_meta(root, sid)))
        reports.append(report)
        rows.append(row)
    mean = {"id": "mean", **mean_reports(reports).to_dict()}
    for key in ("mid_error", "s_loss_bg", "p_loss_bg", "s_loss_fg", "p_loss_fg"):
        values = [r[key] for r in rows if key in r and np.isfinite(r[key])]
        if values:
            mean[key] = float(np.mean(values))
    return {"rule": rule, "samples": rows, "mean": mean}


# Inspection


def _load_scene(manifest):
    config = manifest.config
    return parse_scene_config(config["scene"], config.get("scene_dir", "."), config.get("seed"))


def inspect_pixel(root, sid, u, v):
    """Diagnostic text for pixel (u, v) of a sample's first view."""
    root = Path(root)
    manifest = Manifest.load(root)
    record = read_meta(root, sid)
    meta = record["meta"]
    camera = Camera(**meta["camera"])
    if not (0 <= u < camera.width and 0 <= v < camera.height):
        raise FactoryError(f"pixel ({u}, {v}) outside {camera.width}x{camera.height} image")
    cfg = FilterConfig.from_dict(meta["filter"])
    sampling = RaySamplingConfig(**meta["sampling"])
    scene = _load_scene(manifest).scene
    pose = Pose.from_dict(meta["poses"][0])
    profile, cos = march_pixel(scene, camera, pose, sampling, meta["seeds"]["render_1"], u, v)

    paths = sample_paths(sid)
    cred = CredibilityMaps(
        m_ssim=read_map(root / paths["raw_ssim"]),
        m_conf=read_map(root / paths["raw_conf"]),
        m_dc=read_map(root / paths["raw_dc"]),
    )
    ao = read_map(root / paths["raw_ao"])
    fg = read_mask(root / paths["mask_fg"])
    flow = read_flow_png(root / paths["flow_raw"])
    supervision = read_mask(root / paths["mask_supervision"])

    lines = [f"sample {sid} pixel ({u}, {v})", "", format_profile(profile), ""]
    for label, q in (("t_low", cfg.th_low), ("t_mid", 0.5), ("t_high", cfg.th_high)):
        t = weight_quantile_depth(profile, q)
        lines.append(f"{label} (q={q:g}): ray {t:.4f}  z {t * cos:.4f}")
    lines.append(f"m_conf from profile: {rfc_from_profile(profile, cfg.th_low, cfg.th_high):.4g}")
    lines.append(
        f"stored: m_conf {cred.m_conf[v, u]:.4g}  m_ssim {cred.m_ssim[v, u]:.4g}  "
        f"m_dc {cred.m_dc[v, u]:.4g}  ao {ao[v, u]:.4g}"
    )
    lines.append(f"flow: ({flow.u[v, u]:.4f}, {flow.v[v, u]:.4f})")
    lines.append("")
    lines.extend(
        explain_pixel(cred, float(ao[v, u]) >= cfg.th_occ, bool(flow.valid[v, u]), cfg, u, v, bool(fg[v, u]))
    )
    lines.append(f"supervised: {'yes' if supervision[v, u] else 'no'}")
    return "\n".join(lines)
