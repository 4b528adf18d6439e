"""Fidelity metrics: PSNR, Pearson correlation and bit error rate."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .raster import as_gray, as_mask

__all__ = ["PsnrResult", "psnr", "pearson", "bit_error_rate"]


@dataclass(frozen=True)
class PsnrResult:
    """PSNR in dB; ``value`` is ``None`` when the two images are identical."""

    value: float | None

    @property
    def identical(self) -> bool:
        return self.value is None

    def __str__(self) -> str:
        return "identical" if self.value is None else f"{self.value:.4f}"


def psnr(original, modified, peak: float | None = None) -> PsnrResult:
    """Peak signal-to-noise ratio of ``modified`` against ``original``.

    The peak defaults to the largest intensity of ``original``; pass
    ``peak=255`` for the fixed-peak variant other tools report.
    """
    original = as_gray(original, "original")
    modified = as_gray(modified, "modified")
    if original.shape != modified.shape:
        raise ValueError(f"shape mismatch: {original.shape} vs {modified.shape}")
    err = float(np.sum((original - modified) ** 2))
    if err == 0.0:
        return PsnrResult(None)
    if peak is None:
        peak = float(original.max())
    return PsnrResult(10.0 * math.log10(original.size * peak * peak / err))


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        raise ValueError("need at least 2 samples")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = math.sqrt(float(dx @ dx))
    sy = math.sqrt(float(dy @ dy))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("correlation undefined for a constant sequence")
    r = float(dx @ dy) / (sx * sy)
    return max(-1.0, min(1.0, r))


def bit_error_rate(a, b) -> float:
    a = as_mask(a, "a")
    b = as_mask(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.count_nonzero(a != b)) / a.size
