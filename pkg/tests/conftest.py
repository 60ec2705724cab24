import json
import sys
from pathlib import Path

import numpy as np
import pytest

from salience_audit.salience_io import SalienceMap, write_image, write_salience

# Provider command used by subprocess-dispatch tests; -m keeps it PATH-independent.
MOCK_PROVIDER_CMD = f"{sys.executable} -m salience_audit.mock_provider"


def random_map(rng: np.random.Generator, h: int = 7, w: int = 7) -> SalienceMap:
    return SalienceMap.from_array(rng.random((h, w)).astype(np.float32))


def write_sample_manifest(root: Path, samples: list[dict], runs: list[str]) -> Path:
    """Materialize SalienceMap/InputImage objects into files plus a manifest.

    Each sample dict: sample_id, class_label, dataset_tag, optional score,
    optional image (InputImage), maps (dict run_id -> SalienceMap).
    """
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    for run_id in runs:
        (root / "salience" / run_id).mkdir(parents=True, exist_ok=True)
    rows = []
    for s in samples:
        sid = s["sample_id"]
        row = {
            "sample_id": sid,
            "class_label": s["class_label"],
            "dataset_tag": s["dataset_tag"],
            "salience": {},
        }
        if s.get("score") is not None:
            row["score"] = s["score"]
        if s.get("image") is not None:
            rel = f"images/{sid}.png"
            write_image(s["image"], root / rel)
            row["image_path"] = rel
        for run_id, smap in s.get("maps", {}).items():
            rel = f"salience/{run_id}/{sid}.salm"
            write_salience(smap, root / rel)
            row["salience"][run_id] = rel
        rows.append(row)
    path = root / "manifest.json"
    path.write_text(json.dumps({"version": 1, "runs": runs, "samples": rows}, indent=1))
    return path


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(12345))
