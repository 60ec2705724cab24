"""Perturbed inputs for the measures: noise, geometric transforms, salience-guided blur.

All operations are pure and deterministic. Noise randomness is a function of
(kind, level, seed, dimensions) only; per-sample seeds are derived by XORing
the base seed with a stable 64-bit hash of the sample id, so parallel
execution order never changes outputs.

Direction names describe content motion in screen coordinates (row 0 at the
top): shift D moves the content down, DR toward the bottom-right corner, as
in the transform illustrations the measure set is built around.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .salience_io import InputImage, SalienceMap

NOISE_SALT_PEPPER = "salt_pepper"
NOISE_UNIFORM_BLEND = "uniform_blend"

SHIFT_DIRECTIONS = ("U", "D", "L", "R", "UL", "UR", "DL", "DR")
FLIP_DIRECTIONS = ("LR", "UD")
ROTATE_DIRECTIONS = ("CW", "CC")

# signs of (row, col) content displacement per shift direction
_SHIFT_SIGNS = {
    "U": (-1, 0), "D": (1, 0), "L": (0, -1), "R": (0, 1),
    "UL": (-1, -1), "UR": (-1, 1), "DL": (1, -1), "DR": (1, 1),
}

DEFAULT_SHIFT_FRACTION = 0.2
DEFAULT_THRESHOLD_FRACTION = 0.5
BLUR_SIGMA_AT_224 = 12.0


def derive_seed(base_seed: int, token: str) -> int:
    """Stable per-token 64-bit seed: base XOR blake2b(token)."""
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return (base_seed ^ int.from_bytes(digest, "little")) & 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    level: float
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (NOISE_SALT_PEPPER, NOISE_UNIFORM_BLEND):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.level <= 1.0:
            raise ValueError(f"noise level must be in [0,1], got {self.level}")


@dataclass(frozen=True)
class TransformSpec:
    kind: str  # "shift" | "flip" | "rotate90"
    direction: str
    shift_fraction: float = DEFAULT_SHIFT_FRACTION  # shift only

    def __post_init__(self):
        if self.kind == "shift":
            if self.direction not in SHIFT_DIRECTIONS:
                raise ValueError(f"bad shift direction {self.direction!r}")
            if not 0.0 < self.shift_fraction < 1.0:
                raise ValueError("shift_fraction must be in (0,1)")
        elif self.kind == "flip":
            if self.direction not in FLIP_DIRECTIONS:
                raise ValueError(f"bad flip direction {self.direction!r}")
        elif self.kind == "rotate90":
            if self.direction not in ROTATE_DIRECTIONS:
                raise ValueError(f"bad rotation direction {self.direction!r}")
        else:
            raise ValueError(f"unknown transform kind {self.kind!r}")

    @property
    def label(self) -> str:
        if self.kind == "shift":
            return f"shift:{self.direction}:{self.shift_fraction:g}"
        if self.kind == "flip":
            return f"flip:{self.direction}"
        return f"rot90:{self.direction}"


@dataclass(frozen=True)
class FocusSpec:
    region: str  # "salient" | "non_salient"
    threshold_fraction: float = DEFAULT_THRESHOLD_FRACTION  # of the map's max value
    blur_sigma: float | None = None  # None = 12 px at 224, scaled by min(h,w)/224
    upsample: str = "bilinear"

    def __post_init__(self):
        if self.region not in ("salient", "non_salient"):
            raise ValueError(f"unknown focus region {self.region!r}")
        if not 0.0 < self.threshold_fraction < 1.0:
            raise ValueError("threshold_fraction must be in (0,1)")
        if self.blur_sigma is not None and self.blur_sigma <= 0:
            raise ValueError("blur_sigma must be positive")
        if self.upsample != "bilinear":
            raise ValueError(f"unsupported upsample mode {self.upsample!r}")


# ---------------------------------------------------------------------------
# Noise

def add_noise(img: InputImage, spec: NoiseSpec) -> InputImage:
    """Apply salt-and-pepper or uniform-blend noise; level 0 is a no-op."""
    if spec.level == 0.0:
        return img
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    values = img.values.copy()
    if spec.kind == NOISE_SALT_PEPPER:
        # per-pixel-location replacement by 0 or 1, all channels together
        hit = rng.random((img.height, img.width)) < spec.level
        salt = rng.random((img.height, img.width)) < 0.5
        values[hit] = np.where(salt[hit], 1.0, 0.0)[:, None]
    else:
        u = rng.random(values.shape)
        values = (1.0 - spec.level) * values + spec.level * u
    return InputImage(img.height, img.width, img.channels, values)


# ---------------------------------------------------------------------------
# Geometric transforms

def _shift_pixels(spec: TransformSpec, height: int, width: int) -> tuple[int, int]:
    sr, sc = _SHIFT_SIGNS[spec.direction]
    kr = int(spec.shift_fraction * height + 0.5) if sr else 0
    kc = int(spec.shift_fraction * width + 0.5) if sc else 0
    if int(spec.shift_fraction * min(height, width) + 0.5) < 1:
        raise ValueError(
            f"shift_fraction {spec.shift_fraction} moves less than one pixel "
            f"on a {height}x{width} input"
        )
    return sr * kr, sc * kc


def _shift_array(arr: np.ndarray, dr: int, dc: int, fill: str) -> np.ndarray:
    """Move content by (dr, dc); vacated pixels are edge-replicated or zero."""
    h, w = arr.shape[:2]
    rows = np.arange(h) - dr
    cols = np.arange(w) - dc
    if fill == "edge":
        rows = np.clip(rows, 0, h - 1)
        cols = np.clip(cols, 0, w - 1)
        return arr[np.ix_(rows, cols)]
    out = np.zeros_like(arr)
    rv = (rows >= 0) & (rows < h)
    cv = (cols >= 0) & (cols < w)
    out[np.ix_(rv, cv)] = arr[np.ix_(rows[rv], cols[cv])]
    return out


def _transform_array(arr: np.ndarray, spec: TransformSpec, fill: str) -> np.ndarray:
    h, w = arr.shape[:2]
    if spec.kind == "flip":
        return np.flip(arr, axis=1).copy() if spec.direction == "LR" else np.flip(arr, axis=0).copy()
    if spec.kind == "rotate90":
        if h != w:
            raise ValueError(f"rotate90 requires a square input, got {h}x{w}")
        k = -1 if spec.direction == "CW" else 1
        return np.rot90(arr, k=k).copy()
    dr, dc = _shift_pixels(spec, h, w)
    return _shift_array(arr, dr, dc, fill)


def transform_image(img: InputImage, spec: TransformSpec) -> InputImage:
    """Flips/rotations as exact pixel permutations; shifts with edge-replication fill."""
    values = _transform_array(img.values, spec, fill="edge")
    return InputImage(values.shape[0], values.shape[1], img.channels, values)


def transform_map(smap: SalienceMap, spec: TransformSpec) -> SalienceMap:
    values = _transform_array(smap.values, spec, fill="zero")
    return SalienceMap(values.shape[0], values.shape[1], values, smap.depth_hint)


def inverse_correct(smap: SalienceMap, spec: TransformSpec) -> tuple[SalienceMap, np.ndarray]:
    """Undo `spec` on a salience map; the mask marks pixels that round-tripped.

    Flips and rotations are exact permutations (mask all True). For a shift
    by (dr, dc) the corrected map is shifted back and the mask is the overlap
    rectangle: rows r with 0 <= r+dr < h, cols c with 0 <= c+dc < w.
    """
    h, w = smap.shape
    mask = np.ones((h, w), dtype=bool)
    if spec.kind == "flip":
        corrected = _transform_array(smap.values, spec, fill="zero")
    elif spec.kind == "rotate90":
        inverse = TransformSpec("rotate90", "CC" if spec.direction == "CW" else "CW")
        corrected = _transform_array(smap.values, inverse, fill="zero")
    else:
        dr, dc = _shift_pixels(spec, h, w)
        corrected = _shift_array(smap.values, -dr, -dc, fill="zero")
        rows = np.arange(h) + dr
        cols = np.arange(w) + dc
        mask = ((rows >= 0) & (rows < h))[:, None] & ((cols >= 0) & (cols < w))[None, :]
    return SalienceMap(h, w, corrected, smap.depth_hint), mask


def default_transforms(shift_fraction: float = DEFAULT_SHIFT_FRACTION) -> list[TransformSpec]:
    """The standard twelve: 8 shifts, 2 flips, 2 rotations."""
    specs = [TransformSpec("shift", d, shift_fraction) for d in SHIFT_DIRECTIONS]
    specs += [TransformSpec("flip", d) for d in FLIP_DIRECTIONS]
    specs += [TransformSpec("rotate90", d) for d in ROTATE_DIRECTIONS]
    return specs


# ---------------------------------------------------------------------------
# Salience-guided degradation

def upsample_bilinear(smap: SalienceMap, height: int, width: int) -> np.ndarray:
    """Bilinear resize with half-pixel centers, float64 output."""
    src = smap.values.astype(np.float64)
    sh, sw = smap.shape
    r = np.clip((np.arange(height) + 0.5) * (sh / height) - 0.5, 0.0, sh - 1.0)
    c = np.clip((np.arange(width) + 0.5) * (sw / width) - 0.5, 0.0, sw - 1.0)
    r0 = np.floor(r).astype(int)
    c0 = np.floor(c).astype(int)
    r1 = np.minimum(r0 + 1, sh - 1)
    c1 = np.minimum(c0 + 1, sw - 1)
    fr = (r - r0)[:, None]
    fc = (c - c0)[None, :]
    top = src[np.ix_(r0, c0)] * (1 - fc) + src[np.ix_(r0, c1)] * fc
    bot = src[np.ix_(r1, c0)] * (1 - fc) + src[np.ix_(r1, c1)] * fc
    return top * (1 - fr) + bot * fr


def salience_mask(smap: SalienceMap, img_height: int, img_width: int,
                  threshold_fraction: float) -> np.ndarray:
    """Binary salient-region mask at image resolution."""
    peak = float(smap.values.max())
    if peak <= 0.0:
        raise ValueError("threshold undefined for an all-zero salience map")
    up = upsample_bilinear(smap, img_height, img_width)
    return up >= threshold_fraction * peak


def degrade_by_salience(img: InputImage, smap: SalienceMap, spec: FocusSpec) -> InputImage:
    """Blur the salient (or non-salient) region of `img`, leaving the rest untouched."""
    mask = salience_mask(smap, img.height, img.width, spec.threshold_fraction)
    if spec.region == "non_salient":
        mask = ~mask
    sigma = spec.blur_sigma
    if sigma is None:
        sigma = BLUR_SIGMA_AT_224 * min(img.height, img.width) / 224.0
    blurred = np.empty_like(img.values)
    for ch in range(img.channels):
        blurred[:, :, ch] = gaussian_filter(img.values[:, :, ch], sigma=sigma, mode="reflect")
    blurred = np.clip(blurred, 0.0, 1.0)
    out = np.where(mask[:, :, None], blurred, img.values)
    return InputImage(img.height, img.width, img.channels, out)
