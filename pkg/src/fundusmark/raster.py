"""Raster containers and region plumbing.

Images are plain numpy arrays so they compose with the rest of the
scientific stack:

* gray image   -- 2-D float64 array, intensities in [0, 255]
* color image  -- (rows, cols, 3) float64 array, RGB plane order
* binary mask  -- 2-D bool array

Coordinates follow one convention everywhere: ``x`` is the column,
``y`` is the row, both 0-based from the top-left corner.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Rect",
    "as_gray",
    "as_color",
    "as_mask",
    "green_channel",
    "recombine_color",
    "crop",
    "overlay",
    "round_half_up",
]

RED, GREEN, BLUE = 0, 1, 2


def round_half_up(value: float) -> int:
    return int(np.floor(value + 0.5))


@dataclass(frozen=True)
class Rect:
    """Axis-aligned pixel rectangle; covers columns ``x .. x+width-1``."""

    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 0 or self.height < 0:
            raise ValueError(f"negative rectangle size: {self}")

    @property
    def x_end(self) -> int:
        return self.x + self.width

    @property
    def y_end(self) -> int:
        return self.y + self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + (self.width - 1) / 2.0, self.y + (self.height - 1) / 2.0)

    def contains(self, x: float, y: float) -> bool:
        return self.x <= x < self.x_end and self.y <= y < self.y_end

    def contains_rect(self, other: "Rect") -> bool:
        return (
            other.x >= self.x
            and other.y >= self.y
            and other.x_end <= self.x_end
            and other.y_end <= self.y_end
        )

    def intersect(self, other: "Rect") -> "Rect":
        x0, y0 = max(self.x, other.x), max(self.y, other.y)
        x1, y1 = min(self.x_end, other.x_end), min(self.y_end, other.y_end)
        return Rect(x0, y0, max(0, x1 - x0), max(0, y1 - y0))

    @classmethod
    def of_image(cls, img: np.ndarray) -> "Rect":
        return cls(0, 0, img.shape[1], img.shape[0])


def as_gray(img, name="image") -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_color(img, name="image") -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must have shape (rows, cols, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_mask(mask, name="mask") -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr.astype(bool, copy=False)


def green_channel(img) -> np.ndarray:
    return as_color(img)[:, :, GREEN].copy()


def recombine_color(original, new_green) -> np.ndarray:
    """Swap in a new green plane, keeping red and blue; clamps to [0, 255]."""
    original = as_color(original, "original")
    new_green = as_gray(new_green, "new_green")
    if new_green.shape != original.shape[:2]:
        raise ValueError(
            f"green plane {new_green.shape} does not match image {original.shape[:2]}"
        )
    out = original.copy()
    out[:, :, GREEN] = new_green
    return np.clip(out, 0.0, 255.0)


def _check_inside(img: np.ndarray, r: Rect) -> None:
    if not Rect.of_image(img).contains_rect(r):
        raise ValueError(f"{r} lies outside image of shape {img.shape[:2]}")


def crop(img, r: Rect) -> np.ndarray:
    arr = np.asarray(img)
    if arr.ndim not in (2, 3):
        raise ValueError(f"cannot crop array of shape {arr.shape}")
    _check_inside(arr, r)
    return arr[r.y : r.y_end, r.x : r.x_end].copy()


def overlay(base, patch, at: Rect) -> np.ndarray:
    """Return a copy of ``base`` with the ``at`` region replaced by ``patch``."""
    base = np.asarray(base)
    patch = np.asarray(patch)
    if patch.shape[:2] != (at.height, at.width) or patch.shape[2:] != base.shape[2:]:
        raise ValueError(
            f"patch shape {patch.shape} does not fit {at} on base {base.shape}"
        )
    _check_inside(base, at)
    out = base.copy()
    out[at.y : at.y_end, at.x : at.x_end] = patch
    return out
