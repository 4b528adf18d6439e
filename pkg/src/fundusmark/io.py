"""Image files and the key/size sidecar handed to the receiver."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import SidecarError
from .raster import Rect

__all__ = [
    "read_image",
    "read_gray",
    "quantize",
    "write_png",
    "parse_key",
    "SidecarMeta",
    "read_sidecar",
    "write_sidecar",
    "sidecar_path",
]

FORMAT_VERSION = 1


def read_image(path) -> np.ndarray:
    """Load PNG/PGM/PPM (anything Pillow reads) as an RGB float array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64)


def read_gray(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float64)


def quantize(img) -> np.ndarray:
    """Round half up and clamp to 8 bits."""
    return np.clip(np.floor(np.asarray(img, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)


def write_png(path, img) -> None:
    arr = np.asarray(img)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    else:
        arr = quantize(arr)
    Image.fromarray(arr).save(path, format="PNG")


def parse_key(text: str) -> bytes:
    """Session key from the command line: UTF-8 text or ``hex:``-prefixed bytes."""
    if text.startswith("hex:"):
        try:
            key = bytes.fromhex(text[4:])
        except ValueError as exc:
            raise ValueError(f"invalid hex key: {exc}") from exc
    else:
        key = text.encode("utf-8")
    if not key:
        raise ValueError("session key must not be empty")
    return key


@dataclass(frozen=True)
class SidecarMeta:
    key: bytes
    payload_width: int
    payload_height: int
    gain_k: float
    threshold_multiplier: float
    nroi: Rect
    format_version: int = FORMAT_VERSION

    def to_text(self) -> str:
        lines = [
            f"format_version={self.format_version}",
            f"key={self.key.hex()}",
            f"payload_width={self.payload_width}",
            f"payload_height={self.payload_height}",
            f"gain_k={self.gain_k!r}",
            f"threshold_multiplier={self.threshold_multiplier!r}",
            f"nroi_x={self.nroi.x}",
            f"nroi_y={self.nroi.y}",
            f"nroi_w={self.nroi.width}",
            f"nroi_h={self.nroi.height}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SidecarMeta":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("format_version="):
            raise SidecarError("sidecar must start with format_version")
        fields = {}
        for ln in lines:
            name, sep, value = ln.partition("=")
            if not sep:
                raise SidecarError(f"malformed sidecar line: {ln!r}")
            fields[name.strip()] = value.strip()
        try:
            version = int(fields["format_version"])
            if version != FORMAT_VERSION:
                raise SidecarError(f"unsupported sidecar version {version}")
            meta = cls(
                key=bytes.fromhex(fields["key"]),
                payload_width=int(fields["payload_width"]),
                payload_height=int(fields["payload_height"]),
                gain_k=float(fields["gain_k"]),
                threshold_multiplier=float(fields["threshold_multiplier"]),
                nroi=Rect(
                    int(fields["nroi_x"]), int(fields["nroi_y"]),
                    int(fields["nroi_w"]), int(fields["nroi_h"]),
                ),
                format_version=version,
            )
        except KeyError as exc:
            raise SidecarError(f"sidecar missing field {exc.args[0]}") from exc
        except ValueError as exc:
            raise SidecarError(f"bad sidecar value: {exc}") from exc
        if not meta.key:
            raise SidecarError("sidecar key is empty")
        counts = (meta.payload_width, meta.payload_height, meta.nroi.width, meta.nroi.height)
        if min(counts) < 1:
            raise SidecarError("sidecar sizes must be positive")
        if not (math.isfinite(meta.gain_k) and math.isfinite(meta.threshold_multiplier)):
            raise SidecarError("sidecar gain/threshold must be finite")
        return meta


def sidecar_path(image_path) -> Path:
    p = Path(image_path)
    return p.with_name(p.name + ".meta")


def write_sidecar(path, meta: SidecarMeta) -> None:
    Path(path).write_text(meta.to_text(), encoding="utf-8")


def read_sidecar(path) -> SidecarMeta:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise SidecarError(f"sidecar is not UTF-8 text: {exc}") from exc
    return SidecarMeta.from_text(text)
