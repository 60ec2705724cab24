"""The five dataset-scale salience measures plus AUROC.

Every measure produces a MeasureResult: per-sample values, per-group
mean/std/n aggregates (population std, matching a "plus/minus one standard
deviation" presentation), an exclusion list for degenerate or failed samples
(exclusion, never imputation), and an echo of the configuration used.
Aggregation always iterates samples in sorted id order so results are
bit-reproducible regardless of execution order.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .metric_kernels import EntropyConfig, SsimConfig, entropy, ssim
from .perturbation_engine import (
    FocusSpec,
    NoiseSpec,
    TransformSpec,
    add_noise,
    degrade_by_salience,
    derive_seed,
    inverse_correct,
    transform_image,
)
from .provider_contract import JobRequest, ProviderJob, ProviderResult, dispatch_job
from .salience_io import (
    CLASS_SYNTHETIC,
    InputImage,
    Manifest,
    SalienceMap,
    load_image,
    load_salience,
    write_image,
)

MEASURES = ("entropy", "noise", "resilience", "focus", "stability")

GROUP_TOTAL = "total"


@dataclass
class MeasureResult:
    measure: str
    per_sample: dict
    group_stats: dict[str, dict]
    exclusions: list[dict] = field(default_factory=list)
    config_echo: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        doc = {
            "measure": self.measure,
            "config_echo": self.config_echo,
            "per_sample": self.per_sample,
            "group_stats": self.group_stats,
            "exclusions": self.exclusions,
        }
        if self.extras:
            doc["extras"] = self.extras
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=1, sort_keys=True)


@dataclass
class NoiseCurve:
    levels: list[float]  # strictly ascending, includes 0.0
    mean_ssim: list[float]
    n: list[int]

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("noise levels must be strictly ascending")
        if not self.levels or self.levels[0] != 0.0:
            raise ValueError("noise grid must start at level 0")


@dataclass
class ProviderRunner:
    """Dispatches provider jobs for image variants under a working directory."""

    command: str
    workdir: Path
    run_id: str
    timeout: float = 600.0
    jobs: int = 1

    def run_variants(
        self,
        manifest: Manifest,
        variants: list[tuple[str, Callable[[str, InputImage], InputImage]]],
        expected_shape: tuple[int, int] | None = None,
    ) -> dict[str, ProviderResult]:
        """Produce each variant's images, dispatch one job per variant.

        `variants` pairs a variant_tag with a producer mapping
        (sample_id, clean image) -> perturbed image.
        """
        ids = manifest.sorted_ids()

        def run_one(item: tuple[str, Callable]) -> tuple[str, ProviderResult]:
            tag, producer = item
            job_dir = self.workdir / tag.replace(":", "_").replace("/", "_")
            images_dir = job_dir
            images_dir.mkdir(parents=True, exist_ok=True)
            requests = []
            for sid in ids:
                record = manifest.sample(sid)
                if record.image_path is None:
                    continue
                img = load_image(manifest.resolve(record.image_path))
                name = f"{sid}.png"
                write_image(producer(sid, img), images_dir / name)
                requests.append(JobRequest(sid, name, tag))
            job = ProviderJob.conventional(
                job_id=f"{self.run_id}:{tag}",
                run_id=self.run_id,
                images_dir=images_dir,
                requests=tuple(requests),
            )
            return tag, dispatch_job(job, self.command, self.timeout, expected_shape)

        if self.jobs > 1 and len(variants) > 1:
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                done = list(pool.map(run_one, variants))
        else:
            done = [run_one(v) for v in variants]
        return dict(done)


# ---------------------------------------------------------------------------
# Aggregation helpers

def _population_stats(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std()), "n": int(arr.size)}


def group_stats(manifest: Manifest, per_sample: dict[str, float]) -> dict[str, dict]:
    """Aggregates over authentic, pooled synthetic, each dataset tag, and total."""
    buckets: dict[str, list[float]] = {}
    for sid in sorted(per_sample):
        record = manifest.sample(sid)
        value = per_sample[sid]
        for key in (
            record.class_label,
            f"tag:{record.dataset_tag}",
            GROUP_TOTAL,
        ):
            buckets.setdefault(key, []).append(value)
    return {key: _population_stats(vals) for key, vals in sorted(buckets.items())}


def reference_maps(manifest: Manifest, run_id: str) -> tuple[dict[str, SalienceMap], list[dict]]:
    """Load each sample's salience map for `run_id`; missing maps become exclusions."""
    maps: dict[str, SalienceMap] = {}
    exclusions: list[dict] = []
    for sid in manifest.sorted_ids():
        record = manifest.sample(sid)
        rel = record.salience_paths.get(run_id)
        if rel is None:
            exclusions.append({"sample_id": sid, "reason": f"no salience for run {run_id}"})
            continue
        maps[sid] = load_salience(manifest.resolve(rel))
    return maps, exclusions


def _fmt_level(level: float) -> str:
    return f"{level:g}"


# ---------------------------------------------------------------------------
# Measures

def measure_entropy(
    manifest: Manifest, run_id: str, cfg: EntropyConfig = EntropyConfig()
) -> MeasureResult:
    """Per-sample normalized salience entropy at native resolution."""
    maps, exclusions = reference_maps(manifest, run_id)
    per_sample: dict[str, float] = {}
    for sid in sorted(maps):
        try:
            per_sample[sid] = entropy(maps[sid], cfg)
        except ValueError as exc:
            exclusions.append({"sample_id": sid, "reason": str(exc)})
    return MeasureResult(
        measure="entropy",
        per_sample=per_sample,
        group_stats=group_stats(manifest, per_sample),
        exclusions=exclusions,
        config_echo={"run_id": run_id, "mode": cfg.mode, "histogram_bins": cfg.histogram_bins},
    )


def measure_noise(
    manifest: Manifest,
    run_id: str,
    noise_grid: list[NoiseSpec],
    provider: ProviderRunner,
    ssim_cfg: SsimConfig = SsimConfig(),
    reporting_level: float = 0.2,
) -> tuple[MeasureResult, NoiseCurve]:
    """Mean SSIM between clean-input salience and noisy-input salience per level."""
    levels = [spec.level for spec in noise_grid]
    if sorted(set(levels)) != levels:
        raise ValueError("noise grid levels must be strictly ascending")
    if 0.0 not in levels:
        raise ValueError("noise grid must include level 0")
    if reporting_level not in levels:
        raise ValueError(f"reporting level {reporting_level} not in the noise grid")
    if len({spec.kind for spec in noise_grid}) != 1:
        raise ValueError("noise grid must use a single noise kind")

    refs, exclusions = reference_maps(manifest, run_id)
    shape = next(iter(refs.values())).shape if refs else None

    variants = []
    tags = {}
    for spec in noise_grid:
        kind_short = "sp" if spec.kind == "salt_pepper" else "ub"
        tag = f"noise:{kind_short}:{_fmt_level(spec.level)}"
        tags[spec.level] = tag

        def producer(sid: str, img: InputImage, spec=spec, tag=tag) -> InputImage:
            per_sample_seed = derive_seed(derive_seed(spec.seed, tag), sid)
            return add_noise(img, NoiseSpec(spec.kind, spec.level, per_sample_seed))

        variants.append((tag, producer))

    results = provider.run_variants(manifest, variants, expected_shape=shape)

    per_sample: dict[str, dict[str, float]] = {}
    curve_means: list[float] = []
    curve_n: list[int] = []
    for spec in noise_grid:
        tag = tags[spec.level]
        level_key = _fmt_level(spec.level)
        rows = results[tag].rows
        vals = []
        for sid in sorted(refs):
            row = rows.get((sid, tag))
            if row is None or row.status != "ok":
                reason = row.reason if row is not None else "missing provider row"
                exclusions.append({"sample_id": sid, "variant": tag, "reason": reason})
                continue
            value = ssim(refs[sid], row.salience, ssim_cfg)
            per_sample.setdefault(sid, {})[level_key] = value
            vals.append(value)
        curve_means.append(float(np.mean(vals)) if vals else math.nan)
        curve_n.append(len(vals))

    headline = {
        sid: levels_map[_fmt_level(reporting_level)]
        for sid, levels_map in per_sample.items()
        if _fmt_level(reporting_level) in levels_map
    }
    curve = NoiseCurve(levels=levels, mean_ssim=curve_means, n=curve_n)
    result = MeasureResult(
        measure="noise",
        per_sample=per_sample,
        group_stats=group_stats(manifest, headline),
        exclusions=exclusions,
        config_echo={
            "run_id": run_id,
            "kind": noise_grid[0].kind if noise_grid else None,
            "levels": levels,
            "reporting_level": reporting_level,
            "ssim": _echo_ssim(ssim_cfg),
        },
        extras={
            "curve": {
                "levels": levels,
                "mean_ssim": curve_means,
                "n": curve_n,
            }
        },
    )
    return result, curve


TRANSFORM_CATEGORIES = {"shift": "shifts", "flip": "flips", "rotate90": "rotations"}


def measure_resilience(
    manifest: Manifest,
    run_id: str,
    transforms: list[TransformSpec],
    provider: ProviderRunner,
    ssim_cfg: SsimConfig = SsimConfig(),
) -> MeasureResult:
    """SSIM between original salience and inverse-corrected salience per transform."""
    refs, exclusions = reference_maps(manifest, run_id)
    shape = next(iter(refs.values())).shape if refs else None

    if any(spec.kind == "rotate90" for spec in transforms):
        for sid in sorted(refs):
            record = manifest.sample(sid)
            if refs[sid].height != refs[sid].width:
                raise ValueError(
                    f"rotation transforms require square maps; sample {sid} has "
                    f"{refs[sid].height}x{refs[sid].width}"
                )
            if record.image_path is not None:
                img = load_image(manifest.resolve(record.image_path))
                if img.height != img.width:
                    raise ValueError(
                        f"rotation transforms require square images; sample {sid} has "
                        f"{img.height}x{img.width}"
                    )

    variants = [
        (spec.label, lambda sid, img, spec=spec: transform_image(img, spec))
        for spec in transforms
    ]
    results = provider.run_variants(manifest, variants, expected_shape=shape)

    per_sample: dict[str, dict[str, float]] = {}
    per_transform: dict[str, dict] = {}
    for spec in transforms:
        tag = spec.label
        rows = results[tag].rows
        vals = []
        valid_fraction = None
        for sid in sorted(refs):
            row = rows.get((sid, tag))
            if row is None or row.status != "ok":
                reason = row.reason if row is not None else "missing provider row"
                exclusions.append({"sample_id": sid, "variant": tag, "reason": reason})
                continue
            corrected, mask = inverse_correct(row.salience, spec)
            valid_fraction = float(mask.mean())
            value = ssim(refs[sid], corrected, ssim_cfg, mask=mask)
            per_sample.setdefault(sid, {})[tag] = value
            vals.append(value)
        stats = _population_stats(vals) if vals else {"mean": math.nan, "std": math.nan, "n": 0}
        stats["valid_fraction"] = valid_fraction
        per_transform[tag] = stats

    # Table-2 style grouping: average the per-transform means within each category.
    category_means: dict[str, list[float]] = {}
    for spec in transforms:
        stats = per_transform[spec.label]
        if stats["n"] > 0:
            category_means.setdefault(TRANSFORM_CATEGORIES[spec.kind], []).append(stats["mean"])
    transform_groups = {
        name: float(np.mean(vals)) for name, vals in sorted(category_means.items())
    }
    if transform_groups:
        transform_groups["grand_mean"] = float(np.mean(list(transform_groups.values())))

    expected = {spec.label for spec in transforms}
    headline = {
        sid: float(np.mean([per_sample[sid][t] for t in sorted(per_sample[sid])]))
        for sid in sorted(per_sample)
        if set(per_sample[sid]) == expected
    }
    return MeasureResult(
        measure="resilience",
        per_sample=per_sample,
        group_stats=group_stats(manifest, headline),
        exclusions=exclusions,
        config_echo={
            "run_id": run_id,
            "transforms": [spec.label for spec in transforms],
            "ssim": _echo_ssim(ssim_cfg),
        },
        extras={"per_transform": per_transform, "transform_groups": transform_groups},
    )


def measure_focus(
    manifest: Manifest,
    run_id: str,
    salient_spec: FocusSpec,
    non_salient_spec: FocusSpec,
    provider: ProviderRunner,
    ssim_cfg: SsimConfig = SsimConfig(),
) -> MeasureResult:
    """Salience change and score change under salience-guided blurring.

    SSIM arm: mean SSIM(clean map, post-degradation map) per region. Score
    arm: AUROC of the manifest's ingested scores (original) and of the
    provider's scores on each degraded variant.
    """
    if salient_spec.region != "salient" or non_salient_spec.region != "non_salient":
        raise ValueError("focus needs one salient and one non_salient spec")
    refs, exclusions = reference_maps(manifest, run_id)
    shape = next(iter(refs.values())).shape if refs else None

    degradable: dict[str, bool] = {}
    for sid in sorted(refs):
        degradable[sid] = bool(refs[sid].values.max() > 0.0)
        if not degradable[sid]:
            exclusions.append({"sample_id": sid, "reason": "all-zero clean salience map"})

    arm_specs = {"salient": salient_spec, "non_salient": non_salient_spec}

    def make_producer(spec: FocusSpec):
        def producer(sid: str, img: InputImage) -> InputImage:
            if not degradable.get(sid, False):
                return img  # placeholder; row is excluded from aggregates below
            return degrade_by_salience(img, refs[sid], spec)

        return producer

    variants = [(f"focus:{arm}", make_producer(spec)) for arm, spec in arm_specs.items()]
    results = provider.run_variants(manifest, variants, expected_shape=shape)

    per_sample: dict[str, dict[str, float]] = {}
    stats: dict[str, dict] = {}
    arm_scores: dict[str, dict[str, float]] = {}
    for arm in arm_specs:
        tag = f"focus:{arm}"
        rows = results[tag].rows
        values: dict[str, float] = {}
        scores: dict[str, float] = {}
        for sid in sorted(refs):
            if not degradable[sid]:
                continue
            row = rows.get((sid, tag))
            if row is None or row.status != "ok":
                reason = row.reason if row is not None else "missing provider row"
                exclusions.append({"sample_id": sid, "variant": tag, "reason": reason})
                continue
            values[sid] = ssim(refs[sid], row.salience, ssim_cfg)
            scores[sid] = row.score
            per_sample.setdefault(sid, {})[arm] = values[sid]
        arm_scores[arm] = scores
        for key, stat in group_stats(manifest, values).items():
            stats[f"{arm}:{key}"] = stat

    # AUROC arm: original from ingested scores, degraded from provider scores.
    auroc_values: dict[str, float | None] = {}
    roc_points: dict[str, list[dict]] = {}
    original_scores = {
        s.sample_id: s.score for s in manifest.samples if s.score is not None
    }
    for name, scores in (
        ("original", original_scores),
        ("salient_removed", arm_scores.get("salient", {})),
        ("non_salient_removed", arm_scores.get("non_salient", {})),
    ):
        labels = [manifest.sample(sid).class_label for sid in sorted(scores)]
        vals = [scores[sid] for sid in sorted(scores)]
        try:
            auroc_values[name] = auroc(vals, labels)
            roc_points[name] = roc_curve_points(vals, labels)
        except ValueError as exc:
            auroc_values[name] = None
            exclusions.append({"arm": name, "reason": f"auroc unavailable: {exc}"})

    return MeasureResult(
        measure="focus",
        per_sample=per_sample,
        group_stats=stats,
        exclusions=exclusions,
        config_echo={
            "run_id": run_id,
            "salient": _echo_focus(salient_spec),
            "non_salient": _echo_focus(non_salient_spec),
            "ssim": _echo_ssim(ssim_cfg),
        },
        extras={"auroc": auroc_values, "roc_points": roc_points},
    )


def measure_stability(
    manifest: Manifest, runs: list[str], ssim_cfg: SsimConfig = SsimConfig()
) -> MeasureResult:
    """Mean pairwise SSIM of each sample's maps across independent training runs."""
    if len(runs) < 2:
        raise ValueError("stability needs at least 2 runs")
    per_sample: dict[str, float] = {}
    exclusions: list[dict] = []
    n = len(runs)
    pair_count = n * (n - 1) // 2
    for sid in manifest.sorted_ids():
        record = manifest.sample(sid)
        missing = [r for r in runs if r not in record.salience_paths]
        if missing:
            exclusions.append(
                {"sample_id": sid, "reason": f"missing runs: {', '.join(missing)}"}
            )
            continue
        maps = [load_salience(manifest.resolve(record.salience_paths[r])) for r in runs]
        total = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                total += ssim(maps[i], maps[j], ssim_cfg)
        per_sample[sid] = total / pair_count
    return MeasureResult(
        measure="stability",
        per_sample=per_sample,
        group_stats=group_stats(manifest, per_sample),
        exclusions=exclusions,
        config_echo={"runs": list(runs), "ssim": _echo_ssim(ssim_cfg)},
    )


# ---------------------------------------------------------------------------
# AUROC

def auroc(scores: list[float], labels: list[str]) -> float:
    """P(random synthetic outscores random authentic), ties counted half.

    Closed-form Mann-Whitney rank statistic with midranks for ties.
    """
    if len(scores) != len(labels):
        raise ValueError("scores and labels differ in length")
    arr = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("scores must be finite")
    pos = np.asarray([label == CLASS_SYNTHETIC for label in labels], dtype=bool)
    if pos.all() or not pos.any():
        raise ValueError("auroc needs at least one sample of each class")

    order = np.argsort(arr, kind="stable")
    ranks = np.empty(arr.size, dtype=np.float64)
    i = 0
    while i < arr.size:
        j = i
        while j + 1 < arr.size and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    n_pos = int(pos.sum())
    n_neg = arr.size - n_pos
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve_points(scores: list[float], labels: list[str]) -> list[dict]:
    """(threshold, fpr, tpr) points sweeping thresholds over the score set."""
    arr = np.asarray(scores, dtype=np.float64)
    pos = np.asarray([label == CLASS_SYNTHETIC for label in labels], dtype=bool)
    n_pos = int(pos.sum())
    n_neg = int((~pos).sum())
    # threshold None = "above every score": the (0,0) ROC origin
    points = [{"threshold": None, "fpr": 0.0, "tpr": 0.0}]
    for thr in sorted(set(arr.tolist()), reverse=True):
        sel = arr >= thr
        points.append(
            {
                "threshold": thr,
                "fpr": float((sel & ~pos).sum() / n_neg) if n_neg else 0.0,
                "tpr": float((sel & pos).sum() / n_pos) if n_pos else 0.0,
            }
        )
    return points


# ---------------------------------------------------------------------------
# Config echoes

def _echo_ssim(cfg: SsimConfig) -> dict:
    return {
        "k1": cfg.k1,
        "k2": cfg.k2,
        "dynamic_range": cfg.dynamic_range,
        "variance": "population",
    }


def _echo_focus(spec: FocusSpec) -> dict:
    return {
        "region": spec.region,
        "threshold_fraction": spec.threshold_fraction,
        "blur_sigma": spec.blur_sigma,
        "upsample": spec.upsample,
    }
