"""Command-line surface: run measures from a config file and render reports.

Subcommands:
    audit run        -- every measure requested by the config
    audit entropy|noise|resilience|focus|stability -- single-measure shortcuts
    audit radar      -- five-axis radar profile from an existing results dir
    audit validate   -- lint a config + manifest without running anything

Exit codes: 0 full success, 2 config/validation error (nothing written),
3 provider failure, 4 partial completion. Partial results are never
emitted under exit 0.

Outputs under the output dir: results/<measure>.json, results/<measure>.csv,
results/noise_curve.csv, results/roc_points.csv, results/radar.json,
summary.txt; provider job directories live under work/.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from .metric_kernels import EntropyConfig, SsimConfig
from .perturbation_engine import (
    DEFAULT_SHIFT_FRACTION,
    FocusSpec,
    NoiseSpec,
    TransformSpec,
    default_transforms,
)
from .provider_contract import ProviderError
from .measures import (
    MEASURES,
    MeasureResult,
    ProviderRunner,
    measure_entropy,
    measure_focus,
    measure_noise,
    measure_resilience,
    measure_stability,
)
from .salience_io import Manifest, ManifestError, load_manifest

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROVIDER = 3
EXIT_PARTIAL = 4

DEFAULT_NOISE_LEVELS = [0.0, 0.05, 0.1, 0.2, 0.4, 0.8]
DEFAULT_REPORTING_LEVEL = 0.2

PROVIDER_MEASURES = ("noise", "resilience", "focus")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RadarProfile:
    """Fig-8 style five-axis profile with polarity reversal applied."""

    model_id: str
    axes: dict[str, float]  # keys: entropy', noise, resilience, focus', stability


def parse_transform_label(label: str, shift_fraction: float) -> TransformSpec:
    parts = label.split(":")
    if parts[0] == "shift" and len(parts) in (2, 3):
        fraction = float(parts[2]) if len(parts) == 3 else shift_fraction
        return TransformSpec("shift", parts[1], fraction)
    if parts[0] == "flip" and len(parts) == 2:
        return TransformSpec("flip", parts[1])
    if parts[0] == "rot90" and len(parts) == 2:
        return TransformSpec("rotate90", parts[1])
    raise ConfigError(f"bad transform label {label!r}")


@dataclass
class RunConfig:
    manifest_path: Path
    output_dir: Path
    measures: list[str]
    model_id: str
    run_id: str | None
    stability_runs: list[str] | None
    provider_command: str | None
    seed: int
    jobs: int
    provider_timeout: float
    entropy_cfg: EntropyConfig
    ssim_cfg: SsimConfig
    noise_kind: str
    noise_levels: list[float]
    reporting_level: float
    transforms: list[TransformSpec]
    focus_salient: FocusSpec
    focus_non_salient: FocusSpec
    echo: dict  # effective config minus output-dir/runtime-only knobs

    @classmethod
    def load(cls, config_path, overrides: dict | None = None) -> "RunConfig":
        overrides = overrides or {}
        config_path = Path(config_path)
        try:
            doc = json.loads(config_path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")

        manifest_rel = doc.get("manifest")
        if not manifest_rel:
            raise ConfigError("config needs a 'manifest' path")
        manifest_path = (config_path.parent / manifest_rel).resolve()

        out = overrides.get("out") or doc.get("output_dir")
        if not out:
            raise ConfigError("config needs 'output_dir' (or pass --out)")
        output_dir = Path(out)

        measures = overrides.get("measures") or doc.get("measures") or list(MEASURES)
        bad = [m for m in measures if m not in MEASURES]
        if bad:
            raise ConfigError(f"unknown measures: {bad}")

        provider_command = overrides.get("provider") or doc.get("provider_command")
        if provider_command is None:
            provider_command = os.environ.get("AUDIT_PROVIDER")

        seed = overrides.get("seed")
        if seed is None:
            seed = doc.get("seed", 0)
        jobs = overrides.get("jobs") or doc.get("jobs") or (os.cpu_count() or 1)

        entropy_doc = doc.get("entropy", {})
        ssim_doc = doc.get("ssim", {})
        noise_doc = doc.get("noise", {})
        res_doc = doc.get("resilience", {})
        focus_doc = doc.get("focus", {})
        try:
            entropy_cfg = EntropyConfig(
                mode=entropy_doc.get("mode", "distribution"),
                histogram_bins=int(entropy_doc.get("histogram_bins", 256)),
            )
            ssim_cfg = SsimConfig(
                k1=float(ssim_doc.get("k1", 0.01)),
                k2=float(ssim_doc.get("k2", 0.03)),
                dynamic_range=ssim_doc.get("dynamic_range"),
            )
            shift_fraction = float(res_doc.get("shift_fraction", DEFAULT_SHIFT_FRACTION))
            if "transforms" in res_doc:
                transforms = [
                    parse_transform_label(lbl, shift_fraction) for lbl in res_doc["transforms"]
                ]
            else:
                transforms = default_transforms(shift_fraction)
            focus_common = {
                "threshold_fraction": float(focus_doc.get("threshold_fraction", 0.5)),
                "blur_sigma": focus_doc.get("blur_sigma"),
            }
            focus_salient = FocusSpec(region="salient", **focus_common)
            focus_non_salient = FocusSpec(region="non_salient", **focus_common)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

        noise_levels = [float(x) for x in noise_doc.get("levels", DEFAULT_NOISE_LEVELS)]
        reporting_level = float(noise_doc.get("reporting_level", DEFAULT_REPORTING_LEVEL))
        noise_kind = noise_doc.get("kind", "salt_pepper")

        echo = {
            "manifest": str(manifest_rel),
            "model_id": doc.get("model_id", "model"),
            "measures": list(measures),
            "run_id": doc.get("run_id"),
            "stability_runs": doc.get("stability_runs"),
            "provider_command": provider_command,
            "seed": int(seed),
            "entropy": {"mode": entropy_cfg.mode, "histogram_bins": entropy_cfg.histogram_bins},
            "ssim": {
                "k1": ssim_cfg.k1,
                "k2": ssim_cfg.k2,
                "dynamic_range": ssim_cfg.dynamic_range,
            },
            "noise": {
                "kind": noise_kind,
                "levels": noise_levels,
                "reporting_level": reporting_level,
            },
            "resilience": {"transforms": [t.label for t in transforms]},
            "focus": focus_common,
        }
        return cls(
            manifest_path=manifest_path,
            output_dir=output_dir,
            measures=list(measures),
            model_id=doc.get("model_id", "model"),
            run_id=doc.get("run_id"),
            stability_runs=doc.get("stability_runs"),
            provider_command=provider_command,
            seed=int(seed),
            jobs=int(jobs),
            provider_timeout=float(doc.get("provider_timeout", 600.0)),
            entropy_cfg=entropy_cfg,
            ssim_cfg=ssim_cfg,
            noise_kind=noise_kind,
            noise_levels=noise_levels,
            reporting_level=reporting_level,
            transforms=transforms,
            focus_salient=focus_salient,
            focus_non_salient=focus_non_salient,
            echo=echo,
        )


def validate_config(cfg: RunConfig) -> Manifest:
    """Check every prerequisite that must hold before anything is written."""
    try:
        manifest = load_manifest(cfg.manifest_path)
    except (OSError, ManifestError, json.JSONDecodeError) as exc:
        raise ConfigError(f"manifest: {exc}") from exc

    if "stability" in cfg.measures:
        runs = cfg.stability_runs or list(manifest.runs)
        if len(runs) < 2:
            raise ConfigError(f"stability needs >= 2 runs, manifest has {len(runs)}")
        unknown = [r for r in runs if r not in manifest.runs]
        if unknown:
            raise ConfigError(f"stability_runs not in manifest: {unknown}")
    needs_provider = [m for m in cfg.measures if m in PROVIDER_MEASURES]
    if needs_provider:
        if not cfg.provider_command:
            raise ConfigError(
                f"measures {needs_provider} need a provider command "
                "(config provider_command, --provider, or AUDIT_PROVIDER)"
            )
        if manifest.samples and not any(s.image_path for s in manifest.samples):
            raise ConfigError(f"measures {needs_provider} need samples with image_path")
    if cfg.run_id is not None and cfg.run_id not in manifest.runs:
        raise ConfigError(f"run_id {cfg.run_id!r} not in manifest runs {list(manifest.runs)}")
    if "noise" in cfg.measures:
        if 0.0 not in cfg.noise_levels:
            raise ConfigError("noise levels must include 0")
        if cfg.reporting_level not in cfg.noise_levels:
            raise ConfigError("noise reporting_level must be one of the grid levels")
    return manifest


# ---------------------------------------------------------------------------
# Radar

def make_radar(results: list[MeasureResult], model_id: str = "model") -> RadarProfile:
    """Apply the polarity rules: entropy and salient-removal focus are reversed."""
    by_name = {r.measure: r for r in results}
    missing = [m for m in MEASURES if m not in by_name]
    if missing:
        raise ValueError(f"radar needs all five measures; missing: {missing}")

    def total_mean(result: MeasureResult, key: str = "total") -> float:
        return result.group_stats[key]["mean"]

    axes = {
        "entropy'": 1.0 - total_mean(by_name["entropy"]),
        "noise": total_mean(by_name["noise"]),
        "resilience": by_name["resilience"].extras["transform_groups"]["grand_mean"],
        "focus'": (
            (1.0 - total_mean(by_name["focus"], "salient:total"))
            + total_mean(by_name["focus"], "non_salient:total")
        )
        / 2.0,
        "stability": total_mean(by_name["stability"]),
    }
    axes = {k: min(1.0, max(0.0, v)) for k, v in axes.items()}
    return RadarProfile(model_id=model_id, axes=axes)


# ---------------------------------------------------------------------------
# Output writers

def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_measure_csv(result: MeasureResult, manifest: Manifest, path: Path) -> None:
    rows = []
    if result.measure in ("entropy", "stability"):
        header = ["sample_id", "class_label", "dataset_tag", "value"]
        for sid in sorted(result.per_sample):
            s = manifest.sample(sid)
            rows.append([sid, s.class_label, s.dataset_tag, result.per_sample[sid]])
    elif result.measure == "noise":
        header = ["sample_id", "class_label", "dataset_tag", "level", "ssim"]
        for sid in sorted(result.per_sample):
            s = manifest.sample(sid)
            for level in sorted(result.per_sample[sid], key=float):
                rows.append([sid, s.class_label, s.dataset_tag, level, result.per_sample[sid][level]])
    elif result.measure == "resilience":
        header = ["sample_id", "class_label", "dataset_tag", "transform", "ssim", "valid_fraction"]
        per_transform = result.extras.get("per_transform", {})
        for sid in sorted(result.per_sample):
            s = manifest.sample(sid)
            for tag in sorted(result.per_sample[sid]):
                vf = per_transform.get(tag, {}).get("valid_fraction")
                rows.append([sid, s.class_label, s.dataset_tag, tag, result.per_sample[sid][tag], vf])
    elif result.measure == "focus":
        header = ["sample_id", "class_label", "dataset_tag", "arm", "ssim"]
        for sid in sorted(result.per_sample):
            s = manifest.sample(sid)
            for arm in sorted(result.per_sample[sid]):
                rows.append([sid, s.class_label, s.dataset_tag, arm, result.per_sample[sid][arm]])
    else:
        raise ValueError(f"no CSV schema for measure {result.measure}")
    _write_csv(path, header, rows)


def render_summary(results: dict[str, MeasureResult], failures: dict[str, str],
                   model_id: str) -> str:
    lines = [f"salience audit summary -- model: {model_id}", ""]
    for name in MEASURES:
        if name in failures:
            lines.append(f"[{name}] FAILED: {failures[name]}")
            lines.append("")
            continue
        if name not in results:
            continue
        result = results[name]
        lines.append(f"[{name}]")
        if not result.group_stats:
            lines.append("  no data")
        for key in sorted(result.group_stats):
            st = result.group_stats[key]
            lines.append(
                f"  {key:<24} {st['mean']:.3f} +/- {st['std']:.3f}  (n={st['n']})"
            )
        if name == "resilience" and "transform_groups" in result.extras:
            for grp, val in sorted(result.extras["transform_groups"].items()):
                lines.append(f"  group {grp:<18} {val:.3f}")
        if name == "focus" and "auroc" in result.extras:
            for arm, val in sorted(result.extras["auroc"].items()):
                shown = "n/a" if val is None else f"{val:.3f}"
                lines.append(f"  auroc {arm:<18} {shown}")
        if result.exclusions:
            lines.append(f"  exclusions: {len(result.exclusions)}")
        lines.append("")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Orchestration

def run(config_path, overrides: dict | None = None) -> int:
    try:
        cfg = RunConfig.load(config_path, overrides)
        manifest = validate_config(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    run_id = cfg.run_id or (manifest.runs[0] if manifest.runs else None)
    results_dir = cfg.output_dir / "results"
    work_dir = cfg.output_dir / "work"
    results_dir.mkdir(parents=True, exist_ok=True)

    def runner(measure: str) -> ProviderRunner:
        return ProviderRunner(
            command=cfg.provider_command,
            workdir=work_dir / measure,
            run_id=run_id,
            timeout=cfg.provider_timeout,
            jobs=cfg.jobs,
        )

    results: dict[str, MeasureResult] = {}
    failures: dict[str, str] = {}
    provider_failed = False
    noise_curve = None

    for name in [m for m in MEASURES if m in cfg.measures]:
        try:
            if name == "entropy":
                results[name] = measure_entropy(manifest, run_id, cfg.entropy_cfg)
            elif name == "noise":
                grid = [NoiseSpec(cfg.noise_kind, lvl, cfg.seed) for lvl in cfg.noise_levels]
                results[name], noise_curve = measure_noise(
                    manifest, run_id, grid, runner("noise"), cfg.ssim_cfg,
                    cfg.reporting_level,
                )
            elif name == "resilience":
                results[name] = measure_resilience(
                    manifest, run_id, cfg.transforms, runner("resilience"), cfg.ssim_cfg
                )
            elif name == "focus":
                results[name] = measure_focus(
                    manifest, run_id, cfg.focus_salient, cfg.focus_non_salient,
                    runner("focus"), cfg.ssim_cfg,
                )
            elif name == "stability":
                runs = cfg.stability_runs or list(manifest.runs)
                results[name] = measure_stability(manifest, runs, cfg.ssim_cfg)
        except ProviderError as exc:
            failures[name] = f"provider failure: {exc}"
            provider_failed = True
        except ValueError as exc:
            failures[name] = str(exc)

    for name, result in results.items():
        result.config_echo = {"global": cfg.echo, **result.config_echo}
        _write_json(results_dir / f"{name}.json", result.to_json_dict())
        write_measure_csv(result, manifest, results_dir / f"{name}.csv")

    if noise_curve is not None:
        _write_csv(
            results_dir / "noise_curve.csv",
            ["level", "mean_ssim", "n"],
            [[lvl, m, n] for lvl, m, n in zip(noise_curve.levels, noise_curve.mean_ssim, noise_curve.n)],
        )
    if "focus" in results:
        rows = []
        for arm in sorted(results["focus"].extras.get("roc_points", {})):
            for pt in results["focus"].extras["roc_points"][arm]:
                thr = "" if pt["threshold"] is None else pt["threshold"]
                rows.append([arm, thr, pt["fpr"], pt["tpr"]])
        _write_csv(results_dir / "roc_points.csv", ["arm", "threshold", "fpr", "tpr"], rows)

    if all(m in results for m in MEASURES):
        profile = make_radar(list(results.values()), cfg.model_id)
        _write_json(results_dir / "radar.json", {"model_id": profile.model_id, "axes": profile.axes})

    (cfg.output_dir / "summary.txt").write_text(render_summary(results, failures, cfg.model_id))

    if failures:
        return EXIT_PROVIDER if provider_failed else EXIT_PARTIAL
    return EXIT_OK


def radar_from_dir(results_dir: Path, model_id: str | None = None) -> int:
    results = []
    for name in MEASURES:
        path = results_dir / f"{name}.json"
        if not path.exists():
            print(f"config error: missing {path}", file=sys.stderr)
            return EXIT_CONFIG
        doc = json.loads(path.read_text())
        results.append(
            MeasureResult(
                measure=doc["measure"],
                per_sample=doc["per_sample"],
                group_stats=doc["group_stats"],
                exclusions=doc.get("exclusions", []),
                config_echo=doc.get("config_echo", {}),
                extras=doc.get("extras", {}),
            )
        )
    mid = model_id or results[0].config_echo.get("global", {}).get("model_id", "model")
    profile = make_radar(results, mid)
    _write_json(results_dir / "radar.json", {"model_id": profile.model_id, "axes": profile.axes})
    print(json.dumps(profile.axes, indent=1, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# CLI

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="run-config JSON path")
    parser.add_argument("--jobs", type=int, help="provider job parallelism")
    parser.add_argument("--provider", help="provider command template override")
    parser.add_argument("--seed", type=int, help="global seed override")
    parser.add_argument("--out", help="output directory override")


def _overrides(args: argparse.Namespace, measures: list[str] | None = None) -> dict:
    return {
        "jobs": args.jobs,
        "provider": args.provider,
        "seed": args.seed,
        "out": args.out,
        "measures": measures,
    }


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="audit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("run", *MEASURES):
        p = sub.add_parser(name, help=f"run {'all configured measures' if name == 'run' else name}")
        _add_common(p)

    p_radar = sub.add_parser("radar", help="build radar.json from an existing results dir")
    p_radar.add_argument("--out", required=True, help="output dir of a previous run")
    p_radar.add_argument("--model-id", help="model id to stamp into the profile")

    p_val = sub.add_parser("validate", help="lint config and manifest")
    p_val.add_argument("--config", required=True)

    args = parser.parse_args(argv)

    if args.command == "radar":
        return radar_from_dir(Path(args.out) / "results", args.model_id)
    if args.command == "validate":
        try:
            cfg = RunConfig.load(args.config)
            manifest = validate_config(cfg)
        except ConfigError as exc:
            print(f"invalid: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(
            f"ok: {len(manifest.samples)} samples, {len(manifest.runs)} runs, "
            f"measures: {', '.join(cfg.measures)}"
        )
        return EXIT_OK
    measures = None if args.command == "run" else [args.command]
    return run(args.config, _overrides(args, measures))


if __name__ == "__main__":
    sys.exit(main())
