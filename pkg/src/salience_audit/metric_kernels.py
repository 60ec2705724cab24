"""Normalized Shannon entropy of a salience map and global-statistics SSIM.

Entropy treats the map either as an un-normalized probability distribution
over pixels (distribution mode, the default) or as intensities binned into a
histogram (histogram mode). Both are normalized into [0,1] by the maximum
entropy attainable for the map's size and pixel depth.

SSIM is the single-window form: means, population variances and covariance
over all pixels, stabilized by eps1=(k1*L)^2 and eps2=(k2*L)^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .salience_io import SalienceMap

MODE_DISTRIBUTION = "distribution"
MODE_HISTOGRAM = "histogram"

_CLAMP_SLACK = 1e-12


@dataclass(frozen=True)
class EntropyConfig:
    mode: str = MODE_DISTRIBUTION
    histogram_bins: int = 256  # histogram mode only

    def __post_init__(self):
        if self.mode not in (MODE_DISTRIBUTION, MODE_HISTOGRAM):
            raise ValueError(f"unknown entropy mode {self.mode!r}")
        if self.mode == MODE_HISTOGRAM and self.histogram_bins < 2:
            raise ValueError("histogram_bins must be >= 2")


@dataclass(frozen=True)
class SsimConfig:
    k1: float = 0.01
    k2: float = 0.03
    # None = per-pair dynamic range: joint max minus joint min, floored at 1e-6.
    # Callers comparing min-max-normalized maps should pass 1.0 explicitly.
    dynamic_range: float | None = None

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("k1 and k2 must be positive")
        if self.dynamic_range is not None and self.dynamic_range <= 0:
            raise ValueError("dynamic_range must be positive")


def max_entropy(height: int, width: int, depth_hint: int | None = None) -> float:
    """Maximum entropy (bits) for a height x width map with pixel depth `depth_hint`.

    The effective depth is min(depth_hint, log2(n*m)); with depth_hint absent
    (float-valued maps) or 2^depth >= n*m this reduces to log2(n*m).
    """
    nm = height * width
    if nm < 1:
        raise ValueError(f"zero-area map: {height}x{width}")
    log_nm = math.log2(nm)
    if depth_hint is None or float(depth_hint) >= log_nm:
        return log_nm
    p_hat = float(depth_hint)
    return -(1.0 / 2.0**p_hat) * nm * (log_nm - 2.0 * p_hat)


def _clamp_unit(x: float) -> float:
    if -_CLAMP_SLACK <= x < 0.0:
        return 0.0
    if 1.0 < x <= 1.0 + _CLAMP_SLACK:
        return 1.0
    return x


def entropy(smap: SalienceMap, cfg: EntropyConfig = EntropyConfig()) -> float:
    """Normalized Shannon entropy of a salience map, in [0,1].

    The map must be at its native resolution; this function never resamples.
    """
    values = smap.values.astype(np.float64).ravel()
    total = values.sum()
    if total <= 0.0:
        raise ValueError("entropy undefined for empty distribution (all-zero map)")

    if cfg.mode == MODE_DISTRIBUTION:
        p = values / total
        p = p[p > 0]
        raw = -np.sum(p * np.log2(p))
        denom = max_entropy(smap.height, smap.width, smap.depth_hint)
    else:
        counts, _ = np.histogram(values, bins=cfg.histogram_bins)
        p = counts[counts > 0] / values.size
        raw = -np.sum(p * np.log2(p))
        denom = math.log2(cfg.histogram_bins)
    return _clamp_unit(float(raw / denom))


def ssim(
    a: SalienceMap,
    b: SalienceMap,
    cfg: SsimConfig = SsimConfig(),
    mask: np.ndarray | None = None,
) -> float:
    """Global-statistics structural similarity between two equally-sized maps.

    `mask`, when given, restricts the statistics to the True pixels (used for
    shift-corrected maps where only the overlap region round-tripped).
    """
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    x = a.values.astype(np.float64)
    y = b.values.astype(np.float64)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.shape:
            raise ValueError(f"mask shape {mask.shape} does not match maps {a.shape}")
        if not mask.any():
            raise ValueError("mask selects no pixels")
        x = x[mask]
        y = y[mask]
    else:
        x = x.ravel()
        y = y.ravel()

    if cfg.dynamic_range is not None:
        dyn = cfg.dynamic_range
    else:
        dyn = max(float(max(x.max(), y.max()) - min(x.min(), y.min())), 1e-6)
    eps1 = (cfg.k1 * dyn) ** 2
    eps2 = (cfg.k2 * dyn) ** 2

    mu1 = x.mean()
    mu2 = y.mean()
    dx = x - mu1
    dy = y - mu2
    var1 = np.mean(dx * dx)
    var2 = np.mean(dy * dy)
    cov = np.mean(dx * dy)

    num = (2.0 * mu1 * mu2 + eps1) * (2.0 * cov + eps2)
    den = (mu1 * mu1 + mu2 * mu2 + eps1) * (var1 + var2 + eps2)
    return float(num / den)
