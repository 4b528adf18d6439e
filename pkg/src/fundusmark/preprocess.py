"""Filtering, thresholding and binary morphology for fundus gray images."""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy import ndimage as ndi

from .raster import as_gray, as_mask

__all__ = [
    "FilterParams",
    "wiener_filter",
    "median_filter",
    "normalize_subtract",
    "otsu_level",
    "binarize",
    "area_open",
    "sobel_edges",
    "thin",
    "complement",
    "estimate_background",
]

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class FilterParams:
    """Knobs of the vessel/disc preprocessing chain.

    ``binarize_threshold`` is a fraction of 255; ``None`` selects Otsu.
    """

    wiener_window: int = 7
    median_window: int = 22
    area_open_min: int = 100
    binarize_threshold: float | None = None
    sobel_factor: float = 4.0

    def __post_init__(self):
        if self.wiener_window < 3 or self.wiener_window % 2 == 0:
            raise ValueError(f"wiener_window must be odd and >= 3, got {self.wiener_window}")
        if self.median_window < 2:
            raise ValueError(f"median_window must be >= 2, got {self.median_window}")
        if self.area_open_min < 1:
            raise ValueError(f"area_open_min must be >= 1, got {self.area_open_min}")
        if self.binarize_threshold is not None and not 0.0 <= self.binarize_threshold <= 1.0:
            raise ValueError(f"binarize_threshold must lie in [0, 1], got {self.binarize_threshold}")
        if self.sobel_factor <= 0:
            raise ValueError(f"sobel_factor must be positive, got {self.sobel_factor}")


def wiener_filter(img, window: int = 7) -> np.ndarray:
    """Adaptive pixelwise Wiener filter.

    Local mean and variance are taken over a ``window`` x ``window``
    neighbourhood with zero padding; the noise power is the mean of all
    local variances.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    img = as_gray(img)
    mean = ndi.uniform_filter(img, size=window, mode="constant", cval=0.0)
    sq_mean = ndi.uniform_filter(img * img, size=window, mode="constant", cval=0.0)
    var = np.maximum(sq_mean - mean * mean, 0.0)
    noise = var.mean()
    gain = np.maximum(var - noise, 0.0) / np.maximum(var, np.finfo(float).tiny)
    return mean + gain * (img - mean)


_MEDIAN_BINS = 4096
_COARSE = 64


@numba.njit(cache=True)
def _median_kernel(padded, bins, rows, cols, w):
    # Sliding two-level histogram locates the bins holding the middle order
    # statistics; exact values come from sorting only the pixels in those bins.
    n = w * w
    k_lo = (n - 1) // 2
    k_hi = n // 2
    nfine = _MEDIAN_BINS
    ncoarse = nfine // _COARSE
    out = np.empty((rows, cols))
    fine = np.zeros(nfine, np.int64)
    coarse = np.zeros(ncoarse, np.int64)
    buf = np.empty(n)
    for r in range(rows):
        fine[:] = 0
        coarse[:] = 0
        for i in range(w):
            for j in range(w):
                b = bins[r + i, j]
                fine[b] += 1
                coarse[b // _COARSE] += 1
        for c in range(cols):
            if c > 0:
                for i in range(w):
                    b = bins[r + i, c - 1]
                    fine[b] -= 1
                    coarse[b // _COARSE] -= 1
                    b = bins[r + i, c + w - 1]
                    fine[b] += 1
                    coarse[b // _COARSE] += 1
            acc = 0
            cb = 0
            while acc + coarse[cb] <= k_lo:
                acc += coarse[cb]
                cb += 1
            b = cb * _COARSE
            while acc + fine[b] <= k_lo:
                acc += fine[b]
                b += 1
            b_lo = b
            below = acc
            while acc + fine[b] <= k_hi:
                acc += fine[b]
                b += 1
            b_hi = b
            m = 0
            for i in range(w):
                for j in range(w):
                    bb = bins[r + i, c + j]
                    if bb >= b_lo and bb <= b_hi:
                        buf[m] = padded[r + i, c + j]
                        m += 1
            s = np.sort(buf[:m])
            out[r, c] = 0.5 * (s[k_lo - below] + s[k_hi - below])
    return out


def median_filter(img, window: int) -> np.ndarray:
    """Median over a ``window`` x ``window`` neighbourhood, replicate padded.

    Even windows average the two middle order statistics and place
    ``ceil(window/2) - 1`` pixels above/left of the anchor.
    """
    if window < 2:
        raise ValueError(f"window must be >= 2, got {window}")
    img = as_gray(img)
    lo, hi = img.min(), img.max()
    if lo == hi:
        return img.copy()
    before = (window + 1) // 2 - 1
    after = window - 1 - before
    padded = np.pad(img, ((before, after), (before, after)), mode="edge")
    bins = np.floor((padded - lo) / (hi - lo) * _MEDIAN_BINS).astype(np.int64)
    np.clip(bins, 0, _MEDIAN_BINS - 1, out=bins)
    return _median_kernel(padded, bins, img.shape[0], img.shape[1], window)


def normalize_subtract(foreground, background) -> np.ndarray:
    """Difference image stretched affinely onto [0, 255]."""
    foreground = as_gray(foreground, "foreground")
    background = as_gray(background, "background")
    if foreground.shape != background.shape:
        raise ValueError(f"shape mismatch: {foreground.shape} vs {background.shape}")
    diff = foreground - background
    lo, hi = diff.min(), diff.max()
    if lo == hi:
        return np.zeros_like(diff)
    return (diff - lo) * (255.0 / (hi - lo))


def _intensity_bins(img: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.int64)


def otsu_level(img) -> int:
    """Otsu's level on a 256-bin histogram; pixels in bins above it are foreground."""
    bins = _intensity_bins(as_gray(img))
    hist = np.bincount(bins.ravel(), minlength=256).astype(np.float64)
    if np.count_nonzero(hist) < 2:
        raise ValueError("no separating threshold: image has a single intensity level")
    p = hist / hist.sum()
    w0 = np.cumsum(p)[:-1]
    mu = np.cumsum(p * np.arange(256))[:-1]
    mu_total = mu[-1] + 255 * p[-1]
    denom = w0 * (1.0 - w0)
    with np.errstate(divide="ignore", invalid="ignore"):
        between = np.where(denom > 0, (mu_total * w0 - mu) ** 2 / denom, -1.0)
    return int(np.argmax(between))


def binarize(img, threshold: float | None = None) -> np.ndarray:
    img = as_gray(img)
    if threshold is None:
        return _intensity_bins(img) > otsu_level(img)
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    return img > threshold * 255.0


def area_open(mask, min_size: int) -> np.ndarray:
    """Drop 8-connected components smaller than ``min_size`` pixels."""
    if min_size < 1:
        raise ValueError(f"min_size must be >= 1, got {min_size}")
    mask = as_mask(mask)
    labels, count = ndi.label(mask, structure=EIGHT_CONNECTED)
    if count == 0:
        return mask.copy()
    sizes = np.bincount(labels.ravel())
    keep = sizes >= min_size
    keep[0] = False
    return keep[labels]


def sobel_edges(img, factor: float = 4.0) -> np.ndarray:
    """Sobel gradient magnitude thresholded at ``factor`` times its mean."""
    img = as_gray(img)
    gx = ndi.sobel(img, axis=1, mode="nearest")
    gy = ndi.sobel(img, axis=0, mode="nearest")
    mag = np.hypot(gx, gy)
    mean = mag.mean()
    if mean == 0:
        return np.zeros(img.shape, dtype=bool)
    return mag > factor * mean


def _zhang_suen_pass(img: np.ndarray, first: bool) -> np.ndarray:
    p = np.pad(img, 1).astype(np.uint8)
    p2, p3, p4 = p[:-2, 1:-1], p[:-2, 2:], p[1:-1, 2:]
    p5, p6, p7 = p[2:, 2:], p[2:, 1:-1], p[2:, :-2]
    p8, p9 = p[1:-1, :-2], p[:-2, :-2]
    ring = (p2, p3, p4, p5, p6, p7, p8, p9, p2)
    count = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9
    transitions = sum(((a == 0) & (b == 1)).astype(np.uint8) for a, b in zip(ring, ring[1:]))
    if first:
        c3 = (p2 * p4 * p6) == 0
        c4 = (p4 * p6 * p8) == 0
    else:
        c3 = (p2 * p4 * p8) == 0
        c4 = (p2 * p6 * p8) == 0
    return img & (count >= 2) & (count <= 6) & (transitions == 1) & c3 & c4


def thin(mask) -> np.ndarray:
    """Zhang-Suen thinning iterated until nothing changes."""
    out = as_mask(mask).copy()
    while True:
        changed = False
        for first in (True, False):
            drop = _zhang_suen_pass(out, first)
            if drop.any():
                out &= ~drop
                changed = True
        if not changed:
            return out


def complement(img) -> np.ndarray:
    return 255.0 - as_gray(img)


def estimate_background(gray, params: FilterParams) -> tuple[np.ndarray, np.ndarray]:
    """Wiener-smoothed image and its large-window median background."""
    smoothed = wiener_filter(gray, params.wiener_window)
    return smoothed, median_filter(smoothed, params.median_window)
