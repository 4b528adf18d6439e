"""Harris corner detection and the maximum corner-pair diameter."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage as ndi

from .raster import as_gray

__all__ = [
    "HarrisParams",
    "StructureTensor",
    "CornerPoint",
    "gradients",
    "gaussian_window",
    "structure_tensor",
    "corner_response",
    "detect_corners",
    "max_harris_diameter",
]


@dataclass(frozen=True)
class HarrisParams:
    sigma: float = 1.5
    window_radius: int | None = None
    k: float = 0.04
    nms_radius: int = 3
    response_floor: float = 0.01

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.nms_radius < 1:
            raise ValueError(f"nms_radius must be >= 1, got {self.nms_radius}")
        if not 0 < self.response_floor < 1:
            raise ValueError(f"response_floor must lie in (0, 1), got {self.response_floor}")
        if self.window_radius is not None and self.window_radius < 0:
            raise ValueError(f"window_radius must be >= 0, got {self.window_radius}")

    @property
    def radius(self) -> int:
        if self.window_radius is None:
            return math.ceil(3 * self.sigma)
        return self.window_radius


class StructureTensor(NamedTuple):
    """Window-summed gradient products: A = <Ix^2>, B = <IxIy>, C = <Iy^2>."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray


class CornerPoint(NamedTuple):
    x: int
    y: int
    response: float


def gradients(img) -> tuple[np.ndarray, np.ndarray]:
    """Central differences with the [-1, 0, 1] kernel, replicate borders."""
    img = as_gray(img)
    p = np.pad(img, 1, mode="edge")
    ix = p[1:-1, 2:] - p[1:-1, :-2]
    iy = p[2:, 1:-1] - p[:-2, 1:-1]
    return ix, iy


def gaussian_window(sigma: float, radius: int) -> np.ndarray:
    """Normalized 1-D Gaussian taps; the 2-D window is their outer product."""
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return g / g.sum()


def _smooth(plane: np.ndarray, taps: np.ndarray) -> np.ndarray:
    out = ndi.correlate1d(plane, taps, axis=0, mode="nearest")
    return ndi.correlate1d(out, taps, axis=1, mode="nearest")


def structure_tensor(ix, iy, params: HarrisParams = HarrisParams()) -> StructureTensor:
    ix = as_gray(ix, "Ix")
    iy = as_gray(iy, "Iy")
    if ix.shape != iy.shape:
        raise ValueError(f"gradient planes differ in shape: {ix.shape} vs {iy.shape}")
    taps = gaussian_window(params.sigma, params.radius)
    return StructureTensor(
        _smooth(ix * ix, taps), _smooth(ix * iy, taps), _smooth(iy * iy, taps)
    )


def corner_response(t: StructureTensor, k: float = 0.04) -> np.ndarray:
    """Harris measure det - k * trace^2 of the 2x2 tensor at every pixel."""
    det = t.A * t.C - t.B * t.B
    trace = t.A + t.C
    return det - k * trace * trace


def _strict_local_max(h: np.ndarray, radius: int) -> np.ndarray:
    size = 2 * radius + 1
    footprint = np.ones((size, size), dtype=bool)
    footprint[radius, radius] = False
    neighbours = ndi.maximum_filter(h, footprint=footprint, mode="constant", cval=-np.inf)
    return h > neighbours


def detect_corners(img, params: HarrisParams = HarrisParams()) -> list[CornerPoint]:
    """Harris corners as strict local maxima above a fraction of the peak.

    Sorted by descending response, ties by (y, x).
    """
    img = as_gray(img)
    side = 2 * params.nms_radius + 1
    if img.size < side * side:
        raise ValueError(f"image of shape {img.shape} is smaller than the {side}x{side} NMS window")
    h = corner_response(structure_tensor(*gradients(img), params), params.k)
    peak = h.max()
    if not peak > 0:
        return []
    keep = _strict_local_max(h, params.nms_radius) & (h >= params.response_floor * peak)
    ys, xs = np.nonzero(keep)
    vals = h[ys, xs]
    order = np.lexsort((xs, ys, -vals))
    return [CornerPoint(int(xs[i]), int(ys[i]), float(vals[i])) for i in order]


def max_harris_diameter(points) -> tuple[tuple[int, int], tuple[int, int], float]:
    """Farthest pair of corner points by exhaustive search.

    Returns ``(p1, p2, distance)`` with ``p1`` before ``p2`` in (y, x)
    order; among equally distant pairs the lexicographically smallest
    ``(p1, p2)`` wins.
    """
    pts = [(int(p[0]), int(p[1])) for p in points]
    if len(pts) < 2:
        raise ValueError(f"need at least 2 corner points, got {len(pts)}")
    pts.sort(key=lambda p: (p[1], p[0]))
    xy = np.array(pts, dtype=np.int64)
    best_d2, best_i, best_j = -1, -1, -1
    # integer squared distances keep tie detection exact
    for i in range(len(xy) - 1):
        d = xy[i + 1 :] - xy[i]
        d2 = d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]
        j = int(np.argmax(d2))
        if d2[j] > best_d2:
            best_d2, best_i, best_j = int(d2[j]), i, i + 1 + j
    return pts[best_i], pts[best_j], math.sqrt(best_d2)
