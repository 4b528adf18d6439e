"""Single-level orthonormal 2-D Haar transform."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import as_gray

__all__ = ["SubbandSet", "dwt2_haar", "idwt2_haar"]


@dataclass(frozen=True)
class SubbandSet:
    """Level-1 subbands plus the size of the image they came from.

    For each 2x2 block ``[[a, b], [c, d]]``::

        LL = (a + b + c + d) / 2     HL = (a - b + c - d) / 2
        LH = (a + b - c - d) / 2     HH = (a - b - c + d) / 2
    """

    LL: np.ndarray
    LH: np.ndarray
    HL: np.ndarray
    HH: np.ndarray
    original_rows: int
    original_cols: int

    def __post_init__(self):
        shapes = {b.shape for b in (self.LL, self.LH, self.HL, self.HH)}
        if len(shapes) != 1:
            raise ValueError(f"subbands differ in shape: {sorted(shapes)}")
        (shape,) = shapes
        if len(shape) != 2:
            raise ValueError(f"subbands must be 2-D, got {shape}")
        expected = ((self.original_rows + 1) // 2, (self.original_cols + 1) // 2)
        if shape != expected:
            raise ValueError(
                f"subband shape {shape} inconsistent with original "
                f"{self.original_rows}x{self.original_cols}"
            )

    def replace(self, **bands) -> "SubbandSet":
        fields = dict(
            LL=self.LL, LH=self.LH, HL=self.HL, HH=self.HH,
            original_rows=self.original_rows, original_cols=self.original_cols,
        )
        fields.update(bands)
        return SubbandSet(**fields)


def dwt2_haar(img) -> SubbandSet:
    img = as_gray(img)
    rows, cols = img.shape
    # odd sizes: replicate the last row/column
    x = np.pad(img, ((0, rows % 2), (0, cols % 2)), mode="edge")
    a = x[0::2, 0::2]
    b = x[0::2, 1::2]
    c = x[1::2, 0::2]
    d = x[1::2, 1::2]
    return SubbandSet(
        LL=(a + b + c + d) / 2.0,
        LH=(a + b - c - d) / 2.0,
        HL=(a - b + c - d) / 2.0,
        HH=(a - b - c + d) / 2.0,
        original_rows=rows,
        original_cols=cols,
    )


def idwt2_haar(bands: SubbandSet) -> np.ndarray:
    """Exact inverse of :func:`dwt2_haar`; no clamping."""
    ll, lh, hl, hh = bands.LL, bands.LH, bands.HL, bands.HH
    r2, c2 = ll.shape
    out = np.empty((2 * r2, 2 * c2))
    out[0::2, 0::2] = (ll + lh + hl + hh) / 2.0
    out[0::2, 1::2] = (ll + lh - hl - hh) / 2.0
    out[1::2, 0::2] = (ll - lh + hl - hh) / 2.0
    out[1::2, 1::2] = (ll - lh - hl + hh) / 2.0
    return out[: bands.original_rows, : bands.original_cols].copy()
