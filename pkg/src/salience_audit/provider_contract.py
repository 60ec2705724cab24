"""File-based protocol turning a directory of images into salience maps + scores.

A provider is any external command invoked as `<provider_command> <job_manifest_path>`
that reads the job manifest, scores every requested image, and writes a result
manifest plus one SALM file per request row. Because the manifest path is the
provider's only input, the output location is fixed by convention: providers
write the result manifest and SALM files into `out/` next to the job manifest
(i.e. `<images_dir>/out`). The built-in mock provider (see `mock_provider`) is
a fully specified test double with exact flip/rotation equivariance.
"""
from __future__ import annotations

import json
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .salience_io import InputImage, SalienceMap, load_salience

JOB_MANIFEST_NAME = "job.json"
RESULT_MANIFEST_NAME = "result.json"

MOCK_GRID = 7
MOCK_TEMPERATURE = 0.1


@dataclass(frozen=True)
class JobRequest:
    sample_id: str
    image_file: str  # relative to images_dir
    variant_tag: str  # e.g. "clean", "noise:sp:0.2", "shift:DR:0.2"


@dataclass(frozen=True)
class ProviderJob:
    job_id: str
    run_id: str
    images_dir: Path
    output_dir: Path
    requests: tuple[JobRequest, ...]

    @classmethod
    def conventional(cls, job_id: str, run_id: str, images_dir: Path,
                     requests: tuple[JobRequest, ...]) -> "ProviderJob":
        """Job whose output_dir follows the `<images_dir>/out` convention."""
        return cls(job_id, run_id, images_dir, images_dir / "out", requests)

    def manifest_path(self) -> Path:
        return self.images_dir / JOB_MANIFEST_NAME

    def write_manifest(self) -> Path:
        doc = {
            "job_id": self.job_id,
            "run_id": self.run_id,
            "requests": [
                {"sample_id": r.sample_id, "image": r.image_file, "variant_tag": r.variant_tag}
                for r in self.requests
            ],
        }
        path = self.manifest_path()
        path.write_text(json.dumps(doc, indent=1, sort_keys=True))
        return path


@dataclass(frozen=True)
class ResultRow:
    sample_id: str
    variant_tag: str
    status: str  # "ok" | "failed"
    salience: SalienceMap | None = None
    score: float | None = None
    reason: str | None = None


@dataclass
class ProviderResult:
    job_id: str
    rows: dict[tuple[str, str], ResultRow] = field(default_factory=dict)

    def row(self, sample_id: str, variant_tag: str) -> ResultRow:
        return self.rows[(sample_id, variant_tag)]


class ProviderError(RuntimeError):
    """Job-level provider failure; partial results kept for diagnosis."""

    def __init__(self, message: str, partial: ProviderResult | None = None):
        super().__init__(message)
        self.partial = partial


def dispatch_job(
    job: ProviderJob,
    provider_command: str,
    timeout: float | None = 600.0,
    expected_shape: tuple[int, int] | None = None,
) -> ProviderResult:
    """Run the provider subprocess on `job` and validate everything it returns.

    Every request row must be answered exactly once; all ok rows must carry a
    valid SALM file whose dimensions agree with `expected_shape` (or with each
    other when no expectation is given) and a score in [0,1].
    """
    manifest_path = job.write_manifest()
    job.output_dir.mkdir(parents=True, exist_ok=True)
    argv = shlex.split(provider_command) + [str(manifest_path)]
    try:
        proc = subprocess.run(
            argv, capture_output=True, text=True, timeout=timeout, check=False
        )
    except subprocess.TimeoutExpired as exc:
        raise ProviderError(f"provider timed out after {timeout}s: {argv}") from exc
    if proc.returncode != 0:
        raise ProviderError(
            f"provider exited with {proc.returncode}: {argv}\n{proc.stderr.strip()}"
        )

    result_path = job.output_dir / RESULT_MANIFEST_NAME
    if not result_path.exists():
        raise ProviderError(f"provider wrote no result manifest at {result_path}")
    doc = json.loads(result_path.read_text())
    if doc.get("job_id") != job.job_id:
        raise ProviderError(
            f"result manifest job_id {doc.get('job_id')!r} does not match {job.job_id!r}"
        )

    result = ProviderResult(job_id=job.job_id)
    shape = expected_shape
    for raw in doc.get("results", []):
        key = (raw.get("sample_id"), raw.get("variant_tag"))
        if key in result.rows:
            raise ProviderError(f"duplicate result row for {key}", partial=result)
        status = raw.get("status")
        if status == "ok":
            smap = load_salience(job.output_dir / raw["salience"])
            if shape is None:
                shape = smap.shape
            elif smap.shape != shape:
                raise ProviderError(
                    f"dimension mismatch for sample {key[0]}: got "
                    f"{smap.shape[0]}x{smap.shape[1]}, expected {shape[0]}x{shape[1]}",
                    partial=result,
                )
            score = raw.get("score")
            if score is None or not np.isfinite(score) or not 0.0 <= score <= 1.0:
                raise ProviderError(
                    f"score for sample {key[0]} must be in [0,1], got {score!r}",
                    partial=result,
                )
            result.rows[key] = ResultRow(key[0], key[1], "ok", smap, float(score))
        elif status == "failed":
            result.rows[key] = ResultRow(key[0], key[1], "failed", reason=raw.get("reason"))
        else:
            raise ProviderError(f"bad status {status!r} for {key}", partial=result)

    missing = [
        (r.sample_id, r.variant_tag)
        for r in job.requests
        if (r.sample_id, r.variant_tag) not in result.rows
    ]
    if missing:
        raise ProviderError(
            "provider left requests unanswered: "
            + ", ".join(f"{sid}/{tag}" for sid, tag in missing),
            partial=result,
        )
    extra = set(result.rows) - {(r.sample_id, r.variant_tag) for r in job.requests}
    if extra:
        raise ProviderError(f"provider answered unrequested rows: {sorted(extra)}", partial=result)
    return result


# ---------------------------------------------------------------------------
# Mock provider
#
# Fully specified so any implementation reproduces it to 1e-6:
#   - luminance = plain channel mean, values already in [0,1]
#   - block (r,c) of a 7x7 grid spans rows [floor(r*h/7), floor((r+1)*h/7))
#     and the analogous columns; m[r,c] = mean luminance over the block
#   - salience = softmax(m / 0.1), computed as exp((m - max)/0.1) normalized
#   - score = m[3,3], the raw center-block mean (before the softmax)
#
# With 7 | h and 7 | w the block grid maps onto itself under flips and
# 90-degree rotations, so the mock is exactly equivariant there.

def mock_salience(img: InputImage) -> tuple[SalienceMap, float]:
    if img.height < MOCK_GRID or img.width < MOCK_GRID:
        raise ValueError(f"mock provider needs at least {MOCK_GRID}x{MOCK_GRID} images")
    lum = img.values.mean(axis=2)
    h, w = img.height, img.width
    m = np.empty((MOCK_GRID, MOCK_GRID), dtype=np.float64)
    for r in range(MOCK_GRID):
        r0, r1 = (r * h) // MOCK_GRID, ((r + 1) * h) // MOCK_GRID
        for c in range(MOCK_GRID):
            c0, c1 = (c * w) // MOCK_GRID, ((c + 1) * w) // MOCK_GRID
            m[r, c] = lum[r0:r1, c0:c1].mean()
    z = np.exp((m - m.max()) / MOCK_TEMPERATURE)
    salience = z / z.sum()
    score = float(np.clip(m[MOCK_GRID // 2, MOCK_GRID // 2], 0.0, 1.0))
    return SalienceMap.from_array(salience.astype(np.float32)), score
