"""Deterministic mock fixture sets: images, salience runs, and a manifest.

Run r1 holds the mock provider's salience for each clean image (so provider
re-runs reproduce it bit-for-bit); r2 holds salience for a lightly jittered
copy, giving the stability measure something non-trivial to compare.

Usage: python -m salience_audit.fixtures <dir> [n_authentic n_synthetic]
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

from .perturbation_engine import NoiseSpec, add_noise, derive_seed
from .provider_contract import mock_salience
from .salience_io import InputImage, load_image, write_image, write_salience

IMAGE_SIZE = 112  # divisible by 7: the mock block grid tiles it exactly
JITTER_LEVEL = 0.05
SYNTHETIC_TAGS = ("gan_a", "gan_b")


def _sample_image(rng: np.random.Generator, synthetic: bool) -> InputImage:
    """Noise image with a class-dependent center bump (separates mock scores)."""
    base = rng.random((IMAGE_SIZE, IMAGE_SIZE, 3)) * 0.6
    yy, xx = np.mgrid[0:IMAGE_SIZE, 0:IMAGE_SIZE]
    center = (IMAGE_SIZE - 1) / 2.0
    bump = np.exp(-(((yy - center) ** 2 + (xx - center) ** 2) / (2 * (IMAGE_SIZE / 5) ** 2)))
    amplitude = 0.35 if synthetic else 0.05 + 0.1 * rng.random()
    values = np.clip(base + amplitude * bump[:, :, None], 0.0, 1.0)
    return InputImage.from_array(values)


def build_fixture_set(
    root,
    n_authentic: int = 30,
    n_synthetic: int = 30,
    runs: tuple[str, ...] = ("r1", "r2"),
    seed: int = 20240915,
) -> Path:
    """Create images/, salience/<run>/, and manifest.json under `root`."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    for run_id in runs:
        (root / "salience" / run_id).mkdir(parents=True, exist_ok=True)

    samples = []
    specs = [("auth", "ffhq", "authentic", i) for i in range(n_authentic)]
    specs += [
        ("synt", SYNTHETIC_TAGS[i % len(SYNTHETIC_TAGS)], "synthetic", i)
        for i in range(n_synthetic)
    ]
    for prefix, tag, label, i in specs:
        sid = f"{prefix}{i:04d}"
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, f"img:{sid}")))
        image = _sample_image(rng, synthetic=(label == "synthetic"))
        image_rel = f"images/{sid}.png"
        write_image(image, root / image_rel)
        # reload so stored salience matches what providers will see on disk
        image = load_image(root / image_rel)

        salience_paths = {}
        score = None
        for k, run_id in enumerate(runs):
            if k == 0:
                run_image = image
            else:
                jitter = NoiseSpec(
                    "uniform_blend", JITTER_LEVEL, derive_seed(seed, f"run:{run_id}:{sid}")
                )
                run_image = add_noise(image, jitter)
            smap, run_score = mock_salience(run_image)
            rel = f"salience/{run_id}/{sid}.salm"
            write_salience(smap, root / rel)
            salience_paths[run_id] = rel
            if k == 0:
                score = run_score
        samples.append(
            {
                "sample_id": sid,
                "class_label": label,
                "dataset_tag": tag,
                "score": score,
                "image_path": image_rel,
                "salience": salience_paths,
            }
        )

    manifest = {"version": 1, "runs": list(runs), "samples": samples}
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        print("usage: python -m salience_audit.fixtures <dir> [n_authentic n_synthetic]",
              file=sys.stderr)
        return 2
    n_auth = int(argv[1]) if len(argv) > 1 else 30
    n_synt = int(argv[2]) if len(argv) > 2 else 30
    path = build_fixture_set(argv[0], n_auth, n_synt)
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
