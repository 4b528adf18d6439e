"""Session-keyed spread-spectrum embedding in the HH subband.

Every payload bit owns a +/-1 pseudo-noise (PN) sequence spanning the
whole HH band. A 0-bit adds ``gain * PN`` to HH, a 1-bit leaves it alone.
Extraction is blind: it regenerates the PN sequences from the key,
correlates each with the received HH band and calls a bit 0 when its
correlation exceeds ``threshold_multiplier`` times the mean correlation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError
from .preprocess import median_filter
from .raster import Rect, as_gray, as_mask, crop, green_channel, overlay, recombine_color
from .wavelet import dwt2_haar, idwt2_haar

__all__ = [
    "CAPACITY_DIVISOR",
    "EmbedParams",
    "WatermarkPayload",
    "ExtractionReport",
    "session_key",
    "pn_generate",
    "pn_matrix",
    "capacity",
    "threshold_bits",
    "embed",
    "extract",
    "embed_fundus",
    "extract_fundus",
]

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
XORSHIFT_MULTIPLIER = 2685821657736338717
MASK64 = (1 << 64) - 1

# chips per payload bit: |HH| / CAPACITY_DIVISOR bits at most
CAPACITY_DIVISOR = 16


@dataclass(frozen=True)
class EmbedParams:
    gain: float = 2.0
    threshold_multiplier: float = 2.0

    def __post_init__(self):
        if not self.gain >= 0:
            raise ValueError(f"gain must be >= 0, got {self.gain}")
        if not self.threshold_multiplier > 0:
            raise ValueError(f"threshold_multiplier must be > 0, got {self.threshold_multiplier}")


@dataclass(frozen=True, eq=False)
class WatermarkPayload:
    """Binary watermark image; ``True`` is bit 1, ``False`` bit 0."""

    bits: np.ndarray

    def __post_init__(self):
        bits = as_mask(self.bits, "payload").copy()
        if bits.size == 0:
            raise ValueError("payload must contain at least one bit")
        if bits.all():
            raise ValueError("payload needs at least one 0-bit for blind extraction")
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_image(cls, gray, level: float = 127.5) -> "WatermarkPayload":
        return cls(as_gray(gray) > level)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def zero_fraction(self) -> float:
        return 1.0 - float(np.count_nonzero(self.bits)) / self.bits.size

    def __eq__(self, other):
        if not isinstance(other, WatermarkPayload):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)


@dataclass(frozen=True, eq=False)
class ExtractionReport:
    correlations: np.ndarray
    mean_correlation: float
    threshold: float
    bits: np.ndarray
    recovered_image: np.ndarray
    filtered_image: np.ndarray
    region: Rect | None = field(default=None)


def session_key(key) -> bytes:
    """Normalize a key given as bytes or text (UTF-8)."""
    if isinstance(key, str):
        key = key.encode("utf-8")
    key = bytes(key)
    if not key:
        raise ValueError("session key must not be empty")
    return key


def _fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


def _seed(key: bytes, bit_index: int) -> int:
    seed = _fnv1a64(key + int(bit_index).to_bytes(8, "little"))
    return seed if seed != 0 else FNV_OFFSET


def _xorshift_signs(seeds: np.ndarray, length: int) -> np.ndarray:
    """xorshift64* streams, one per seed; sign is the top bit of each output."""
    x = np.array(seeds, dtype=np.uint64)
    out = np.empty((x.size, length), dtype=np.int8)
    s12, s25, s27, s63 = (np.uint64(v) for v in (12, 25, 27, 63))
    mult = np.uint64(XORSHIFT_MULTIPLIER)
    for j in range(length):
        x ^= x >> s12
        x ^= x << s25
        x ^= x >> s27
        top = ((x * mult) >> s63).astype(np.int8)
        out[:, j] = 2 * top - 1
    return out


def pn_generate(key, bit_index: int, length: int) -> np.ndarray:
    """Deterministic +/-1 sequence for one payload bit."""
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    if bit_index < 0:
        raise ValueError(f"bit_index must be >= 0, got {bit_index}")
    return _xorshift_signs(np.array([_seed(session_key(key), bit_index)], dtype=np.uint64), length)[0]


def pn_matrix(key, n_bits: int, length: int) -> np.ndarray:
    """Rows are ``pn_generate(key, i, length)`` for ``i in range(n_bits)``."""
    key = session_key(key)
    seeds = np.array([_seed(key, i) for i in range(n_bits)], dtype=np.uint64)
    return _xorshift_signs(seeds, length)


def capacity(shape) -> int:
    """Largest payload bit count a gray image of ``shape`` can carry."""
    rows, cols = shape[:2]
    return ((rows + 1) // 2) * ((cols + 1) // 2) // CAPACITY_DIVISOR


def _check_capacity(shape, n_bits: int) -> None:
    if n_bits < 1:
        raise CapacityError(f"payload must have at least one bit, got {n_bits}")
    cap = capacity(shape)
    if n_bits > cap:
        raise CapacityError(
            f"payload of {n_bits} bits exceeds capacity {cap} of a {shape[0]}x{shape[1]} region"
        )


def embed(nroi_gray, payload, key, params: EmbedParams = EmbedParams()) -> np.ndarray:
    """Hide ``payload`` in the HH band of a gray region; returns real values.

    ``payload`` is a :class:`WatermarkPayload` or a raw boolean array; a raw
    all-ones array is accepted and embeds nothing.
    """
    img = as_gray(nroi_gray)
    key = session_key(key)
    bits = payload.bits if isinstance(payload, WatermarkPayload) else as_mask(payload, "payload")
    _check_capacity(img.shape, bits.size)
    bands = dwt2_haar(img)
    zeros = np.flatnonzero(~bits.ravel())
    if zeros.size == 0:
        return idwt2_haar(bands)
    pn = pn_matrix(key, int(zeros.max()) + 1, bands.HH.size)
    spread = pn[zeros].sum(axis=0, dtype=np.int64).reshape(bands.HH.shape)
    return idwt2_haar(bands.replace(HH=bands.HH + params.gain * spread))


def threshold_bits(correlations, multiplier: float = 2.0) -> tuple[np.ndarray, float, float]:
    """Apply the mean-relative decision rule; returns (bits, mean, threshold)."""
    c = np.asarray(correlations, dtype=np.float64)
    mean = float(c.mean())
    threshold = multiplier * mean
    return ~(c > threshold), mean, threshold


def extract(
    watermarked_gray,
    key,
    payload_width: int,
    payload_height: int,
    params: EmbedParams = EmbedParams(),
) -> ExtractionReport:
    """Recover a ``payload_height`` x ``payload_width`` watermark blindly."""
    img = as_gray(watermarked_gray)
    key = session_key(key)
    if payload_width < 1 or payload_height < 1:
        raise CapacityError(f"invalid payload size {payload_width}x{payload_height}")
    n_bits = payload_width * payload_height
    _check_capacity(img.shape, n_bits)
    hh = dwt2_haar(img).HH.ravel()
    hc = hh - hh.mean()
    h_norm = np.sqrt(hc @ hc)
    if h_norm == 0.0:
        raise ValueError("HH subband is constant; correlation undefined")
    pn = pn_matrix(key, n_bits, hh.size).astype(np.float64)
    pc = pn - pn.mean(axis=1, keepdims=True)
    p_norm = np.sqrt(np.einsum("ij,ij->i", pc, pc))
    if np.any(p_norm == 0.0):
        raise ValueError("degenerate constant PN sequence")
    correlations = (pc @ hc) / (p_norm * h_norm)
    bits, mean, threshold = threshold_bits(correlations, params.threshold_multiplier)
    recovered = bits.reshape(payload_height, payload_width)
    filtered = median_filter(recovered.astype(np.float64), 3) > 0.5
    return ExtractionReport(
        correlations=correlations,
        mean_correlation=mean,
        threshold=threshold,
        bits=bits,
        recovered_image=recovered,
        filtered_image=filtered,
    )


def embed_fundus(fundus, payload: WatermarkPayload, key, params: EmbedParams, localization):
    """Watermark the NROI of a color fundus image.

    ``localization`` is an :class:`~fundusmark.anatomy.Localization` (or
    anything with an ``nroi.rect``). Returns ``(image, nroi)``; pixels
    outside the NROI are untouched.
    """
    nroi = localization.nroi
    region = crop(fundus, nroi.rect)
    marked = embed(green_channel(region), payload, key, params)
    patch = recombine_color(region, marked)
    return overlay(fundus, patch, nroi.rect), nroi


def extract_fundus(
    watermarked,
    key,
    payload_width: int,
    payload_height: int,
    params: EmbedParams = EmbedParams(),
    **localize_kwargs,
) -> ExtractionReport:
    """Relocate the NROI on a watermarked fundus image and extract from it."""
    from .anatomy import localize

    if payload_width < 1 or payload_height < 1:
        raise CapacityError(f"invalid payload size {payload_width}x{payload_height}")
    loc = localize(watermarked, **localize_kwargs)
    gray = green_channel(crop(watermarked, loc.nroi.rect))
    report = extract(gray, key, payload_width, payload_height, params)
    return ExtractionReport(**{**report.__dict__, "region": loc.nroi.rect})
