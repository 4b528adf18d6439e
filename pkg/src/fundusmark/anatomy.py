"""Anatomical localization of the optic disc, macula and the NROI.

The chain mirrors how a grader would find a safe spot to write on a
fundus photograph:

1. vessel tree -> Harris corners -> best-fit ellipse; its centre tells on
   which side of the disc the macula lies;
2. bright-disc mask -> Harris corners -> farthest corner pair gives the
   disc centre ``O`` and diameter ``D``;
3. a 0.5D-high search band starting 1.5D from ``O`` towards the macula
   is scanned for dark (macula) candidates;
4. the 0.5D square at the band end away from the macula is the NROI.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage as ndi

from .corners import CornerPoint, HarrisParams, detect_corners, max_harris_diameter
from .errors import LocalizationError
from .preprocess import (
    FilterParams,
    area_open,
    binarize,
    complement,
    estimate_background,
    normalize_subtract,
    sobel_edges,
    thin,
)
from .raster import Rect, as_color, as_gray, green_channel, round_half_up

__all__ = [
    "EllipseFit",
    "OpticDisc",
    "SearchSpace",
    "MaculaEstimate",
    "NroiRegion",
    "Localization",
    "fit_ellipse",
    "locate_macula_direction",
    "detect_optic_disc",
    "min_avg_intensity_points",
    "build_search_space",
    "select_macula",
    "select_nroi",
    "localize",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EllipseFit:
    center: tuple[float, float]
    coefficients: tuple[float, float, float, float, float, float]
    residual: float


@dataclass(frozen=True)
class OpticDisc:
    center: tuple[float, float]
    diameter: float
    endpoints: tuple[tuple[int, int], tuple[int, int]] | None = None

    def __post_init__(self):
        if not self.diameter > 0:
            raise ValueError(f"disc diameter must be positive, got {self.diameter}")

    @property
    def radius(self) -> float:
        return self.diameter / 2


@dataclass(frozen=True)
class SearchSpace:
    rect: Rect
    direction: int
    clipped: bool = False


@dataclass(frozen=True)
class MaculaEstimate:
    candidates: tuple[tuple[float, float], ...]
    distances: tuple[float, ...]
    inside: tuple[bool, ...]
    selected: tuple[float, float]
    selected_distance: float
    min_distance: float
    mean_distance: float
    max_distance: float


@dataclass(frozen=True)
class NroiRegion:
    rect: Rect


@dataclass(frozen=True)
class Localization:
    ellipse: EllipseFit
    direction: int
    disc: OpticDisc
    search_space: SearchSpace
    macula: MaculaEstimate
    nroi: NroiRegion
    stages: dict = field(default_factory=dict, compare=False, repr=False)


def fit_ellipse(points) -> EllipseFit:
    """Algebraic least-squares conic through ``points`` (x, y).

    Minimizes sum (ax^2 + bxy + cy^2 + dx + ey + f)^2 over unit-norm
    coefficient vectors. Points are centred and scaled before the SVD for
    conditioning; the returned coefficients are in image coordinates.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 5:
        raise ValueError(f"ellipse fit needs at least 5 points, got {len(pts)}")
    mean = pts.mean(axis=0)
    scale = math.sqrt(np.mean(np.sum((pts - mean) ** 2, axis=1)) / 2.0)
    if scale == 0:
        raise ValueError("degenerate point set: all points coincide")
    u, v = ((pts - mean) / scale).T
    design = np.column_stack([u * u, u * v, v * v, u, v, np.ones_like(u)])
    _, sv, vt = np.linalg.svd(design, full_matrices=False)
    if sv.size < 6 or sv[-2] <= 1e-10 * sv[0]:
        raise ValueError("degenerate point set: conic not unique")
    A, B, C, D, E, F = vt[-1]
    disc_n = B * B - 4 * A * C
    if not disc_n < 0:
        raise ValueError("best-fit conic is not an ellipse")
    cu = (2 * C * D - B * E) / disc_n
    cv = (2 * A * E - B * D) / disc_n
    center = (float(mean[0] + scale * cu), float(mean[1] + scale * cv))

    mx, my = mean
    s2 = scale * scale
    coef = np.array([
        A / s2,
        B / s2,
        C / s2,
        (-2 * A * mx - B * my) / s2 + D / scale,
        (-2 * C * my - B * mx) / s2 + E / scale,
        (A * mx * mx + B * mx * my + C * my * my) / s2 - (D * mx + E * my) / scale + F,
    ])
    coef /= np.linalg.norm(coef)
    lead = coef[np.flatnonzero(np.abs(coef) > 0)[0]]
    if lead < 0:
        coef = -coef
    x, y = pts.T
    resid = np.column_stack([x * x, x * y, y * y, x, y, np.ones_like(x)]) @ coef
    return EllipseFit(center, tuple(float(c) for c in coef), float(np.sqrt(np.mean(resid * resid))))


def _as_fundus(img) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    return as_color(arr, "fundus")


def _binarize_or_empty(img: np.ndarray, threshold) -> np.ndarray:
    # a flat difference image separates nothing
    if img.max() == img.min():
        return np.zeros(img.shape, dtype=bool)
    return binarize(img, threshold)


def _corner_xy(corners: list[CornerPoint]) -> list[tuple[int, int]]:
    return [(c.x, c.y) for c in corners]


def _vessel_corners(smoothed, background, fp: FilterParams, hp: HarrisParams, stages=None):
    enhanced = normalize_subtract(background, smoothed)
    vessels = area_open(_binarize_or_empty(enhanced, fp.binarize_threshold), fp.area_open_min)
    edges = sobel_edges(vessels * 255.0, fp.sobel_factor)
    skeleton = thin(edges)
    corners = detect_corners(skeleton * 255.0, hp)
    if stages is not None:
        stages.update(enhanced=enhanced, vessels=vessels, skeleton=skeleton, vessel_corners=corners)
    return corners


def _ellipse_from_corners(corners) -> EllipseFit:
    if not corners:
        raise LocalizationError("macula-direction", "no corners detected")
    if len(corners) < 5:
        raise LocalizationError("macula-direction", f"only {len(corners)} corners detected, need 5")
    try:
        return fit_ellipse(_corner_xy(corners))
    except ValueError as exc:
        raise LocalizationError("macula-direction", str(exc)) from exc


def locate_macula_direction(
    fundus, filter_params: FilterParams = FilterParams(), harris_params: HarrisParams = HarrisParams()
) -> tuple[float, float]:
    """Centre of the ellipse fitted to vessel-tree Harris corners."""
    gray = green_channel(_as_fundus(fundus))
    smoothed, background = estimate_background(gray, filter_params)
    corners = _vessel_corners(smoothed, background, filter_params, harris_params)
    return _ellipse_from_corners(corners).center


def _disc_from_background(gray, background, fp: FilterParams, hp: HarrisParams, stages=None) -> OpticDisc:
    enhanced = normalize_subtract(gray, complement(background))
    mask = area_open(_binarize_or_empty(enhanced, fp.binarize_threshold), fp.area_open_min)
    edges = sobel_edges(mask * 255.0, fp.sobel_factor)
    corners = detect_corners(edges * 255.0, hp)
    if stages is not None:
        stages.update(disc_enhanced=enhanced, disc_mask=mask, disc_edges=edges, disc_corners=corners)
    if len(corners) < 2:
        raise LocalizationError("optic-disc", f"only {len(corners)} corners on the disc mask, need 2")
    p1, p2, diameter = max_harris_diameter(_corner_xy(corners))
    center = ((p1[0] + p2[0]) / 2.0, (p1[1] + p2[1]) / 2.0)
    return OpticDisc(center, diameter, (p1, p2))


def detect_optic_disc(
    roi, filter_params: FilterParams = FilterParams(), harris_params: HarrisParams = HarrisParams()
) -> OpticDisc:
    """Disc centre and diameter from the farthest pair of disc-edge corners."""
    gray = green_channel(_as_fundus(roi))
    _, background = estimate_background(gray, filter_params)
    return _disc_from_background(gray, background, filter_params, harris_params)


def min_avg_intensity_points(img, window: int = 11, max_points: int = 32) -> list[tuple[float, float]]:
    """Local minima of the ``window``-mean plane, darkest first.

    A pixel qualifies when it attains the minimum of its window. Connected
    qualifying pixels (plateaus are common on 8-bit data) form one minimum
    unless the plateau has no higher surroundings; each minimum is
    represented by its member closest to the plateau centroid.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 3, got {window}")
    img = as_gray(img)
    # round away summation noise so flat areas form true plateaus
    mean = np.round(ndi.uniform_filter(img, size=window, mode="nearest"), 6)
    lo = ndi.minimum_filter(mean, size=window, mode="nearest")
    hi = ndi.maximum_filter(mean, size=window, mode="nearest")
    # connected pixels at their window minimum share one value; such a
    # plateau is a minimum unless nothing around it is higher
    labels, count = ndi.label(mean == lo, structure=np.ones((3, 3), dtype=bool))
    rises = np.zeros(count + 1, dtype=bool)
    rises[np.unique(labels[mean < hi])] = True
    rises[0] = False
    labels = np.where(rises[labels], labels, 0)
    if not labels.any():
        return []
    ys, xs = np.nonzero(labels)
    lab = labels[ys, xs]
    n = np.bincount(lab)
    cy = np.bincount(lab, ys) / np.maximum(n, 1)
    cx = np.bincount(lab, xs) / np.maximum(n, 1)
    gap = (ys - cy[lab]) ** 2 + (xs - cx[lab]) ** 2
    # per plateau: closest to centroid, then (y, x)
    order = np.lexsort((xs, ys, gap, lab))
    first = order[np.r_[True, lab[order][1:] != lab[order][:-1]]]
    ys, xs = ys[first], xs[first]
    rank = np.lexsort((xs, ys, mean[ys, xs]))[:max_points]
    return [(float(xs[i]), float(ys[i])) for i in rank]


def build_search_space(disc: OpticDisc, direction: int, image_bounds: Rect, length_factor: float = 1.0) -> SearchSpace:
    """Band of ``length_factor*D`` x ``0.5*D`` whose near edge is 1.5D from O."""
    if direction not in (1, -1):
        raise ValueError(f"direction must be +1 or -1, got {direction}")
    if not length_factor > 0:
        raise ValueError(f"length_factor must be positive, got {length_factor}")
    ox, oy = disc.center
    d = disc.diameter
    width = round_half_up(length_factor * d)
    height = round_half_up(0.5 * d)
    x0 = round_half_up(ox + round_half_up(1.5 * d))
    if direction < 0:
        # mirror image of the +1 band about the vertical through O
        x0 = round_half_up(2 * ox - (x0 + width - 1))
    y0 = round_half_up(oy - height / 2.0)
    rect = Rect(x0, y0, width, height)
    clipped = not image_bounds.contains_rect(rect)
    if clipped:
        log.warning("search space %s clipped to image bounds %s", rect, image_bounds)
        rect = image_bounds.intersect(rect)
    return SearchSpace(rect, direction, clipped)


def select_macula(candidates, disc: OpticDisc, space: SearchSpace) -> MaculaEstimate:
    """Closest in-band dark candidate to the disc centre."""
    pts = [(float(x), float(y)) for x, y in candidates]
    ox, oy = disc.center
    dist = [math.hypot(x - ox, y - oy) for x, y in pts]
    inside = [space.rect.contains(x, y) for x, y in pts]
    in_band = [(d, i) for i, (d, ok) in enumerate(zip(dist, inside)) if ok]
    if not in_band:
        raise LocalizationError("macula", "no minimum-intensity candidate inside the search space")
    best_d, best_i = min(in_band)
    ds = [d for d, _ in in_band]
    return MaculaEstimate(
        candidates=tuple(pts),
        distances=tuple(dist),
        inside=tuple(inside),
        selected=pts[best_i],
        selected_distance=best_d,
        min_distance=min(ds),
        mean_distance=sum(ds) / len(ds),
        max_distance=max(ds),
    )


def select_nroi(space: SearchSpace, macula: MaculaEstimate, disc: OpticDisc) -> NroiRegion:
    """0.5D square at the search-space end farther from the macula."""
    side = round_half_up(0.5 * disc.diameter)
    r = space.rect
    if r.width < side or r.height < side:
        raise LocalizationError("nroi", f"search space {r.width}x{r.height} cannot hold a {side}px square")
    y0 = r.y + (r.height - side) // 2
    near_x, far_x = (r.x, r.x_end - side) if space.direction > 0 else (r.x_end - side, r.x)
    mx, my = macula.selected

    def gap(x0):
        cx, cy = Rect(x0, y0, side, side).center
        return math.hypot(cx - mx, cy - my)

    x0 = near_x if gap(near_x) > gap(far_x) else far_x
    return NroiRegion(Rect(x0, y0, side, side))


def localize(
    fundus,
    filter_params: FilterParams = FilterParams(),
    harris_params: HarrisParams = HarrisParams(),
    search_length_factor: float = 1.0,
    intensity_window: int = 11,
    max_points: int = 32,
    keep_stages: bool = False,
) -> Localization:
    """Run the whole localization chain on a color fundus image."""
    img = _as_fundus(fundus)
    gray = green_channel(img)
    stages = {"gray": gray} if keep_stages else None
    try:
        smoothed, background = estimate_background(gray, filter_params)
    except ValueError as exc:
        raise LocalizationError("preprocess", str(exc)) from exc
    if stages is not None:
        stages.update(smoothed=smoothed, background=background)

    corners = _vessel_corners(smoothed, background, filter_params, harris_params, stages)
    ellipse = _ellipse_from_corners(corners)
    disc = _disc_from_background(gray, background, filter_params, harris_params, stages)
    direction = 1 if ellipse.center[0] >= disc.center[0] else -1

    space = build_search_space(disc, direction, Rect.of_image(gray), search_length_factor)
    if space.rect.width == 0 or space.rect.height == 0:
        raise LocalizationError("search-space", "search space falls outside the image")
    candidates = min_avg_intensity_points(gray, intensity_window, max_points)
    macula = select_macula(candidates, disc, space)
    nroi = select_nroi(space, macula, disc)
    if nroi.rect.contains(*macula.selected):
        raise LocalizationError("nroi", "macula candidate falls inside the NROI")
    return Localization(ellipse, direction, disc, space, macula, nroi, stages or {})
