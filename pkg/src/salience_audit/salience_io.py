"""Salience/image exchange formats, the dataset manifest, and loading/validation.

SALM binary layout (all little-endian):
    magic "SALM" | u8 version=1 | u8 flags (bit 0: depth_hint present) |
    u16 reserved=0 | u32 height | u32 width | [u8 depth_hint] |
    height*width float32, row-major
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

SALM_MAGIC = b"SALM"
SALM_VERSION = 1

CLASS_AUTHENTIC = "authentic"
CLASS_SYNTHETIC = "synthetic"
CLASS_LABELS = (CLASS_AUTHENTIC, CLASS_SYNTHETIC)


class SalienceFormatError(ValueError):
    """Malformed SALM/PNG salience source; `field` names the offending part."""

    def __init__(self, message: str, field: str = ""):
        super().__init__(message)
        self.field = field


class ManifestError(ValueError):
    """Invalid manifest; `violations` lists every problem found, not just the first."""

    def __init__(self, violations: list[str]):
        super().__init__("manifest validation failed:\n  " + "\n  ".join(violations))
        self.violations = violations


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class SalienceMap:
    """2D non-negative float raster at the model's native salience resolution."""

    height: int
    width: int
    values: np.ndarray  # float32, shape (height, width), read-only
    depth_hint: int | None = None  # bit depth of a quantized source; None = float

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise SalienceFormatError(
                f"dimensions must be >= 1, got {self.height}x{self.width}", "dimensions"
            )
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        if values.shape != (self.height, self.width):
            raise SalienceFormatError(
                f"payload length mismatch: expected {self.height}x{self.width}, "
                f"got array of shape {values.shape}",
                "values",
            )
        if not np.all(np.isfinite(values)):
            raise SalienceFormatError("values contain non-finite entries", "values")
        if np.any(values < 0):
            raise SalienceFormatError("values contain negative entries", "values")
        object.__setattr__(self, "values", _freeze(values))

    @classmethod
    def from_array(cls, arr, depth_hint: int | None = None) -> "SalienceMap":
        arr = np.asarray(arr, dtype=np.float32)
        if arr.ndim != 2:
            raise SalienceFormatError(f"expected a 2D raster, got ndim={arr.ndim}", "values")
        return cls(arr.shape[0], arr.shape[1], arr, depth_hint)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)


@dataclass(frozen=True)
class InputImage:
    """Row-major interleaved float image in [0,1], 1 or 3 channels."""

    height: int
    width: int
    channels: int
    values: np.ndarray  # float64, shape (height, width, channels), read-only

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.shape != (self.height, self.width, self.channels):
            raise ValueError(
                f"expected shape {(self.height, self.width, self.channels)}, got {values.shape}"
            )
        if not np.all(np.isfinite(values)) or values.min() < 0.0 or values.max() > 1.0:
            raise ValueError("image values must be finite and within [0,1]")
        object.__setattr__(self, "values", _freeze(values))

    @classmethod
    def from_array(cls, arr) -> "InputImage":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        return cls(arr.shape[0], arr.shape[1], arr.shape[2], arr)


@dataclass(frozen=True)
class SampleRecord:
    """Identity of one test image plus its per-run salience references."""

    sample_id: str
    class_label: str  # "authentic" | "synthetic"
    dataset_tag: str
    salience_paths: dict[str, str]  # run_id -> path, relative to the manifest dir
    score: float | None = None  # model's synthetic-class probability
    image_path: str | None = None


@dataclass(frozen=True)
class Manifest:
    """Validated sample collection with groups derived from tags and class labels."""

    version: int
    runs: tuple[str, ...]
    samples: tuple[SampleRecord, ...]
    root: Path  # directory all relative paths resolve against
    groups: dict[tuple[str, str], tuple[str, ...]] = field(default_factory=dict)

    def sample(self, sample_id: str) -> SampleRecord:
        return self._by_id[sample_id]

    def __post_init__(self):
        object.__setattr__(self, "_by_id", {s.sample_id: s for s in self.samples})

    def resolve(self, relpath: str) -> Path:
        return self.root / relpath

    def sorted_ids(self) -> list[str]:
        return sorted(s.sample_id for s in self.samples)


# ---------------------------------------------------------------------------
# SALM read/write

def write_salience(smap: SalienceMap, path) -> None:
    """Write a SalienceMap as a SALM file (bit-exact round trip for float maps)."""
    flags = 1 if smap.depth_hint is not None else 0
    header = SALM_MAGIC + struct.pack(
        "<BBHII", SALM_VERSION, flags, 0, smap.height, smap.width
    )
    if smap.depth_hint is not None:
        header += struct.pack("<B", smap.depth_hint)
    payload = np.ascontiguousarray(smap.values, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def _load_salm(data: bytes, path) -> SalienceMap:
    if len(data) < 16:
        raise SalienceFormatError(f"{path}: truncated header ({len(data)} bytes)", "header")
    version, flags, reserved, height, width = struct.unpack("<BBHII", data[4:16])
    if version != SALM_VERSION:
        raise SalienceFormatError(f"{path}: unsupported version {version}", "version")
    if reserved != 0:
        raise SalienceFormatError(f"{path}: reserved field must be 0, got {reserved}", "reserved")
    if flags & ~0x01:
        raise SalienceFormatError(f"{path}: unknown flag bits 0x{flags:02x}", "flags")
    offset = 16
    depth_hint = None
    if flags & 0x01:
        if len(data) < 17:
            raise SalienceFormatError(f"{path}: missing depth_hint byte", "depth_hint")
        depth_hint = data[16]
        offset = 17
    if height < 1 or width < 1:
        raise SalienceFormatError(f"{path}: dimensions must be >= 1, got {height}x{width}", "dimensions")
    expected = height * width * 4
    if len(data) - offset != expected:
        raise SalienceFormatError(
            f"{path}: payload length mismatch: expected {expected} bytes "
            f"for {height}x{width}, got {len(data) - offset}",
            "payload",
        )
    values = np.frombuffer(data, dtype="<f4", count=height * width, offset=offset)
    values = values.reshape(height, width).astype(np.float32, copy=True)
    return SalienceMap(height, width, values, depth_hint)


def _load_salience_png(path) -> SalienceMap:
    with Image.open(path) as img:
        if img.mode != "L":
            raise SalienceFormatError(
                f"{path}: salience PNG must be 8-bit single-channel (mode L), got {img.mode}",
                "png_mode",
            )
        arr = np.asarray(img, dtype=np.uint8)
    values = (arr.astype(np.float64) / 255.0).astype(np.float32)
    return SalienceMap(arr.shape[0], arr.shape[1], values, depth_hint=8)


def load_salience(path) -> SalienceMap:
    """Load a SALM file or an 8-bit single-channel PNG (depth_hint=8, values k/255)."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] == SALM_MAGIC:
        return _load_salm(data, path)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _load_salience_png(path)
    raise SalienceFormatError(f"{path}: not a SALM or PNG file", "magic")


def write_salience_png(smap: SalienceMap, path) -> None:
    """Export a quantized (depth_hint=8) map back to 8-bit PNG, losslessly."""
    if smap.depth_hint != 8:
        raise SalienceFormatError("PNG export requires depth_hint=8", "depth_hint")
    arr = np.rint(smap.values.astype(np.float64) * 255.0)
    if arr.min() < 0 or arr.max() > 255:
        raise SalienceFormatError("values out of [0,1] for 8-bit export", "values")
    Image.fromarray(arr.astype(np.uint8), mode="L").save(path, format="PNG")


# ---------------------------------------------------------------------------
# Input images (8-bit PNG carrier for perturbation pipelines)

def load_image(path) -> InputImage:
    with Image.open(path) as img:
        if img.mode == "L":
            arr = np.asarray(img, dtype=np.uint8)[:, :, None]
        elif img.mode == "RGB":
            arr = np.asarray(img, dtype=np.uint8)
        else:
            raise ValueError(f"{path}: unsupported image mode {img.mode} (want L or RGB)")
    return InputImage.from_array(arr.astype(np.float64) / 255.0)


def write_image(img: InputImage, path) -> None:
    arr = np.rint(img.values * 255.0).astype(np.uint8)
    if img.channels == 1:
        Image.fromarray(arr[:, :, 0], mode="L").save(path, format="PNG")
    else:
        Image.fromarray(arr, mode="RGB").save(path, format="PNG")


# ---------------------------------------------------------------------------
# Manifest

def load_manifest(path) -> Manifest:
    """Load and fully validate a manifest JSON document.

    All violations are collected and reported together.
    """
    path = Path(path)
    root = path.parent
    doc = json.loads(path.read_text())

    violations: list[str] = []
    version = doc.get("version")
    if not isinstance(version, int):
        violations.append(f"version must be an integer, got {version!r}")
        version = 0
    runs = doc.get("runs", [])
    if not isinstance(runs, list) or not all(isinstance(r, str) for r in runs):
        violations.append("runs must be an array of strings")
        runs = []

    samples: list[SampleRecord] = []
    seen_ids: set[str] = set()
    for i, raw in enumerate(doc.get("samples", [])):
        sid = raw.get("sample_id")
        where = f"samples[{i}]" + (f" ({sid})" if sid else "")
        if not sid or not isinstance(sid, str):
            violations.append(f"{where}: missing sample_id")
            continue
        if sid in seen_ids:
            violations.append(f"{where}: duplicate sample_id")
            continue
        seen_ids.add(sid)
        label = raw.get("class_label")
        if label not in CLASS_LABELS:
            violations.append(f"{where}: class_label must be one of {CLASS_LABELS}, got {label!r}")
            continue
        tag = raw.get("dataset_tag")
        if not isinstance(tag, str) or not tag:
            violations.append(f"{where}: dataset_tag must be a non-empty string")
            continue
        score = raw.get("score")
        if score is not None:
            if not isinstance(score, (int, float)) or not np.isfinite(score):
                violations.append(f"{where}: score must be finite, got {score!r}")
                continue
            score = float(score)
        salience = raw.get("salience", {})
        if not isinstance(salience, dict):
            violations.append(f"{where}: salience must be an object run_id->path")
            continue
        for run_id, rel in salience.items():
            if run_id not in runs:
                violations.append(f"{where}: salience references run {run_id!r} absent from runs")
            elif not (root / rel).exists():
                violations.append(f"{where}: salience file missing: {rel}")
        image_path = raw.get("image_path")
        if image_path is not None and not (root / image_path).exists():
            violations.append(f"{where}: image file missing: {image_path}")
        samples.append(
            SampleRecord(
                sample_id=sid,
                class_label=label,
                dataset_tag=tag,
                salience_paths=dict(salience),
                score=score,
                image_path=image_path,
            )
        )

    if violations:
        raise ManifestError(violations)

    groups: dict[tuple[str, str], tuple[str, ...]] = {}
    for s in samples:
        groups.setdefault((s.class_label, s.dataset_tag), [])
    for s in samples:
        groups[(s.class_label, s.dataset_tag)].append(s.sample_id)
    groups = {k: tuple(sorted(v)) for k, v in groups.items()}

    return Manifest(
        version=version,
        runs=tuple(runs),
        samples=tuple(samples),
        root=root,
        groups=groups,
    )
