"""Synthetic fundus phantoms with known anatomy.

A phantom has an orange-red retina with mild illumination falloff and
texture, a bright optic disc, a dark macula temporal to it, and two
vascular arcades leaving the disc and bending around the macula, plus a
few nasal vessels. Values are quantized to integers as if read from an
8-bit file.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage as ndi

__all__ = ["FundusPhantom", "synthetic_fundus", "stripe_payload", "fixture_set"]


@dataclass(frozen=True)
class FundusPhantom:
    image: np.ndarray
    disc_center: tuple[float, float]
    disc_diameter: float
    macula_center: tuple[float, float]
    direction: int


def _segment_distance(xx, yy, p, q):
    px, py = p
    qx, qy = q
    dx, dy = qx - px, qy - py
    t = ((xx - px) * dx + (yy - py) * dy) / max(dx * dx + dy * dy, 1e-12)
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(xx - (px + t * dx), yy - (py + t * dy))


def _draw_vessel(depth_map, polyline, width0, width1, depth):
    """Darken along a polyline with a Gaussian cross-section that tapers."""
    rows, cols = depth_map.shape
    n = len(polyline) - 1
    for i in range(n):
        p, q = polyline[i], polyline[i + 1]
        sigma = width0 + (width1 - width0) * (i + 0.5) / n
        pad = int(4 * sigma) + 2
        x0 = max(int(min(p[0], q[0])) - pad, 0)
        x1 = min(int(max(p[0], q[0])) + pad + 1, cols)
        y0 = max(int(min(p[1], q[1])) - pad, 0)
        y1 = min(int(max(p[1], q[1])) + pad + 1, rows)
        if x0 >= x1 or y0 >= y1:
            continue
        yy, xx = np.mgrid[y0:y1, x0:x1].astype(np.float64)
        d = _segment_distance(xx, yy, p, q)
        prof = depth * np.exp(-(d * d) / (2 * sigma * sigma))
        np.maximum(depth_map[y0:y1, x0:x1], prof, out=depth_map[y0:y1, x0:x1])


def _arc(cx, cy, a, b, theta0, theta1, sign, steps=48):
    th = np.radians(np.linspace(theta0, theta1, steps))
    return [(cx + a * math.cos(t), cy - sign * b * math.sin(t)) for t in th]


def _branch(start, angle_deg, length, bend_deg=0.0, steps=12):
    pts = [start]
    x, y = start
    ang = math.radians(angle_deg)
    step = length / steps
    for _ in range(steps):
        x += step * math.cos(ang)
        y += step * math.sin(ang)
        ang += math.radians(bend_deg) / steps
        pts.append((x, y))
    return pts


def synthetic_fundus(seed: int = 0, disc_diameter: float = 272.0, mirrored: bool = False) -> FundusPhantom:
    rng = np.random.default_rng(seed)
    d = float(disc_diameter)
    rows = int(round(2.2 * d))
    cols = int(round(3.45 * d + 40))
    ox = round(0.6 * d + 20) + 0.5
    oy = rows / 2 + rng.uniform(-0.03, 0.03) * d
    mac = (ox + 1.65 * d, oy + rng.uniform(-0.04, 0.04) * d)

    yy, xx = np.mgrid[0:rows, 0:cols].astype(np.float64)
    cx, cy = (cols - 1) / 2, (rows - 1) / 2
    falloff = ((xx - cx) / cols) ** 2 + ((yy - cy) / rows) ** 2
    green = 190.0 - 40.0 * falloff
    texture = ndi.gaussian_filter(rng.normal(0.0, 9.0, (rows, cols)), 2.0)
    green += texture + rng.normal(0.0, 1.2, (rows, cols))

    vessels = np.zeros((rows, cols))
    acx = ox + 1.3 * d
    for sign in (1, -1):
        a, b = 1.3 * d, (0.82 + rng.uniform(-0.04, 0.04)) * d
        arcade = _arc(acx, oy, a, b, 180.0, 28.0, sign)
        _draw_vessel(vessels, arcade, 4.0, 2.0, 62.0)
        for k, theta in enumerate((150.0, 112.0, 78.0, 52.0)):
            t = math.radians(theta)
            start = (acx + a * math.cos(t), oy - sign * b * math.sin(t))
            # alternate branches outward (away from macula) and inward
            out = -sign * (90.0 - (theta - 90.0) * 0.6)
            ang = out if k % 2 == 0 else -out * 0.35 + (sign * 15.0)
            length = (0.35 + 0.1 * rng.random()) * d
            _draw_vessel(vessels, _branch(start, ang, length, bend_deg=sign * 20.0), 2.6, 1.6, 50.0)
        nasal = _branch((ox, oy - sign * 0.1 * d), 180.0 + sign * 35.0, 0.55 * d, bend_deg=-sign * 30.0)
        _draw_vessel(vessels, nasal, 3.0, 1.8, 55.0)
    green -= vessels

    mx, my = mac
    r2 = (xx - mx) ** 2 + (yy - my) ** 2
    green -= 105.0 * np.exp(-r2 / (2 * (0.085 * d) ** 2))

    rd = np.hypot(xx - ox, yy - oy)
    inside = (rd <= d / 2).astype(np.float64)
    disc_level = 250.0 + ndi.gaussian_filter(rng.normal(0.0, 2.0, (rows, cols)), 1.0)
    green = green * (1 - inside) + np.minimum(disc_level, 254.0) * inside

    green = np.clip(green, 0.0, 255.0)
    red = np.clip(1.2 * green + 25.0, 0.0, 255.0)
    blue = np.clip(0.3 * green + 5.0, 0.0, 255.0)
    image = np.floor(np.stack([red, green, blue], axis=2) + 0.5)

    direction = 1
    if mirrored:
        image = image[:, ::-1].copy()
        ox = cols - 1 - ox
        mac = (cols - 1 - mx, my)
        direction = -1
    return FundusPhantom(image, (ox, oy), d, mac, direction)


def stripe_payload(size: int = 16, stripes=((4, 6), (10, 12)), vertical: bool = False) -> np.ndarray:
    """Binary payload of 1s crossed by full-length 0-stripes.

    Full-length stripes at least two pixels thick survive the 3x3 median
    clean-up unchanged, so they make exact round-trip references.
    """
    bits = np.ones((size, size), dtype=bool)
    for lo, hi in stripes:
        bits[lo:hi, :] = False
    return bits.T.copy() if vertical else bits


def fixture_set():
    """Three phantoms with distinct seeds, disc sizes and laterality."""
    return [
        synthetic_fundus(seed=0, disc_diameter=272.0),
        synthetic_fundus(seed=1, disc_diameter=264.0, mirrored=True),
        synthetic_fundus(seed=2, disc_diameter=288.0),
    ]
