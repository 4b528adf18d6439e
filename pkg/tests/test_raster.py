import numpy as np
import pytest

from fundusmark.raster import (
    Rect,
    crop,
    green_channel,
    overlay,
    recombine_color,
    round_half_up,
)


def test_round_half_up():
    assert [round_half_up(v) for v in (0.5, 1.5, 2.5, -0.5, 2.49)] == [1, 2, 3, 0, 2]


def test_rect_geometry():
    r = Rect(2, 3, 4, 5)
    assert (r.x_end, r.y_end) == (6, 8)
    assert r.center == (3.5, 5.0)
    assert r.contains(2, 3) and not r.contains(6, 3)
    assert r.contains_rect(Rect(3, 4, 1, 1))
    assert r.intersect(Rect(0, 0, 4, 4)) == Rect(2, 3, 2, 1)


def test_rect_rejects_negative_size():
    with pytest.raises(ValueError):
        Rect(0, 0, -1, 2)


def test_green_channel_plane_copy(rng):
    img = rng.uniform(0, 255, (4, 4, 3))
    g = green_channel(img)
    assert np.array_equal(g, img[:, :, 1])
    g[0, 0] = -1
    assert img[0, 0, 1] != -1
    assert green_channel(np.array([[[10.0, 20.0, 30.0]]])).tolist() == [[20.0]]


def test_recombine_color(rng):
    img = np.floor(rng.uniform(0, 255, (5, 6, 3)))
    assert np.array_equal(recombine_color(img, green_channel(img)), img)
    zero = recombine_color(img, np.zeros((5, 6)))
    assert not zero[:, :, 1].any()
    assert np.array_equal(zero[:, :, [0, 2]], img[:, :, [0, 2]])
    hot = np.full((5, 6), 300.0)
    assert (recombine_color(img, hot)[:, :, 1] == 255.0).all()
    with pytest.raises(ValueError):
        recombine_color(img, np.zeros((5, 5)))


def test_crop_convention_and_bounds():
    img = np.arange(30, dtype=float).reshape(5, 6)
    assert np.array_equal(crop(img, Rect.of_image(img)), img)
    assert crop(img, Rect(2, 3, 1, 1))[0, 0] == img[3, 2]
    with pytest.raises(ValueError):
        crop(img, Rect(4, 0, 3, 1))


def test_overlay_round_trips(rng):
    base = rng.uniform(0, 255, (8, 9, 3))
    before = base.copy()
    r = Rect(2, 1, 4, 3)
    assert np.array_equal(overlay(base, crop(base, r), r), base)
    out = overlay(base, np.zeros((3, 4, 3)), r)
    assert not crop(out, r).any()
    mask = np.ones(base.shape[:2], bool)
    mask[r.y:r.y_end, r.x:r.x_end] = False
    assert np.array_equal(out[mask], base[mask])
    patch = rng.uniform(0, 255, (3, 4, 3))
    assert np.array_equal(crop(overlay(base, patch, r), r), patch)
    assert np.array_equal(base, before)
    with pytest.raises(ValueError):
        overlay(base, np.zeros((2, 2, 3)), r)
