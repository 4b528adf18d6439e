"""Blind spread-spectrum watermarking inside the non-diagnostic region of fundus images."""

__version__ = "0.1.0"

from .anatomy import Localization, localize
from .errors import CapacityError, FundusmarkError, LocalizationError, SidecarError
from .metrics import bit_error_rate, pearson, psnr
from .raster import Rect
from .stego import (
    EmbedParams,
    ExtractionReport,
    WatermarkPayload,
    capacity,
    embed,
    embed_fundus,
    extract,
    extract_fundus,
    pn_generate,
)
from .wavelet import SubbandSet, dwt2_haar, idwt2_haar

__all__ = [
    "__version__",
    "Localization",
    "localize",
    "CapacityError",
    "FundusmarkError",
    "LocalizationError",
    "SidecarError",
    "bit_error_rate",
    "pearson",
    "psnr",
    "Rect",
    "EmbedParams",
    "ExtractionReport",
    "WatermarkPayload",
    "capacity",
    "embed",
    "embed_fundus",
    "extract",
    "extract_fundus",
    "pn_generate",
    "SubbandSet",
    "dwt2_haar",
    "idwt2_haar",
]
