"""``fundusmark`` command line: locate, embed, extract, stages.

stdout carries ``key=value`` lines only; human messages go to stderr.
Exit codes: 0 ok, 2 unreadable input, 3 localization failure,
4 payload/capacity problem, 5 malformed sidecar or missing key material,
6 unwritable output directory.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from . import __version__
from .anatomy import Localization, localize
from .corners import HarrisParams
from .errors import CapacityError, LocalizationError, SidecarError
from .io import (
    SidecarMeta,
    parse_key,
    quantize,
    read_gray,
    read_image,
    read_sidecar,
    sidecar_path,
    write_png,
    write_sidecar,
)
from .metrics import bit_error_rate, pearson, psnr
from .preprocess import FilterParams
from .raster import Rect, crop, green_channel
from .stego import EmbedParams, WatermarkPayload, capacity, embed_fundus, extract
from .synthetic import stripe_payload

EXIT_OK = 0
EXIT_UNREADABLE = 2
EXIT_LOCALIZATION = 3
EXIT_CAPACITY = 4
EXIT_SIDECAR = 5
EXIT_UNWRITABLE = 6


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _emit(**fields) -> None:
    for name, value in fields.items():
        if isinstance(value, float):
            value = f"{value:.6f}"
        print(f"{name}={value}")


def _load(path) -> np.ndarray:
    try:
        return read_image(path)
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_UNREADABLE, f"cannot read image {path}: {exc}") from exc


def _filter_params(args) -> FilterParams:
    try:
        return FilterParams(
            wiener_window=args.wiener_window,
            median_window=args.median_window,
            area_open_min=args.area_open_min,
            binarize_threshold=None if args.otsu else args.threshold,
        )
    except ValueError as exc:
        raise CliError(EXIT_UNREADABLE, f"invalid filter option: {exc}") from exc


def _localize(img, args, keep_stages=False) -> Localization:
    try:
        return localize(
            img,
            filter_params=_filter_params(args),
            harris_params=HarrisParams(),
            search_length_factor=args.search_length_factor,
            keep_stages=keep_stages,
        )
    except LocalizationError as exc:
        raise CliError(EXIT_LOCALIZATION, f"localization failed at {exc}") from exc


def _key(text) -> bytes:
    try:
        return parse_key(text)
    except ValueError as exc:
        raise CliError(EXIT_SIDECAR, str(exc)) from exc


def _report_location(loc: Localization) -> None:
    r, s = loc.nroi.rect, loc.search_space
    _emit(
        od_center_x=float(loc.disc.center[0]),
        od_center_y=float(loc.disc.center[1]),
        od_diameter=float(loc.disc.diameter),
        od_radius=float(loc.disc.radius),
        ellipse_center_x=loc.ellipse.center[0],
        ellipse_center_y=loc.ellipse.center[1],
        direction=loc.direction,
        macula_x=loc.macula.selected[0],
        macula_y=loc.macula.selected[1],
        macula_distance=loc.macula.selected_distance,
        macula_candidates=len(loc.macula.candidates),
        macula_in_space=sum(loc.macula.inside),
        search_x=s.rect.x, search_y=s.rect.y, search_w=s.rect.width, search_h=s.rect.height,
        search_clipped=int(s.clipped),
        nroi_x=r.x, nroi_y=r.y, nroi_w=r.width, nroi_h=r.height,
        capacity_bits=capacity((r.height, r.width)),
    )


def _annotate(img, loc: Localization) -> Image.Image:
    canvas = Image.fromarray(quantize(img))
    draw = ImageDraw.Draw(canvas)
    ox, oy = loc.disc.center
    rad = loc.disc.radius
    draw.ellipse([ox - rad, oy - rad, ox + rad, oy + rad], outline=(0, 255, 255), width=2)
    for rect, colour in ((loc.search_space.rect, (255, 255, 0)), (loc.nroi.rect, (0, 255, 0))):
        draw.rectangle([rect.x, rect.y, rect.x_end - 1, rect.y_end - 1], outline=colour, width=2)
    mx, my = loc.macula.selected
    draw.ellipse([mx - 4, my - 4, mx + 4, my + 4], fill=(255, 0, 255))
    return canvas


def cmd_locate(args) -> int:
    img = _load(args.input)
    loc = _localize(img, args)
    _report_location(loc)
    if args.overlay:
        _annotate(img, loc).save(args.overlay, format="PNG")
    return EXIT_OK


def _payload(path) -> WatermarkPayload:
    try:
        gray = read_gray(path)
    except (OSError, ValueError) as exc:
        raise CliError(EXIT_UNREADABLE, f"cannot read watermark {path}: {exc}") from exc
    try:
        payload = WatermarkPayload.from_image(gray)
    except ValueError as exc:
        raise CliError(EXIT_CAPACITY, f"unusable watermark: {exc}") from exc
    if not 0.1 <= payload.zero_fraction <= 0.9:
        print(
            f"warning: watermark has {payload.zero_fraction:.1%} zero bits; "
            "blind extraction is unreliable outside 10%-90%",
            file=sys.stderr,
        )
    return payload


def _embed_params(args) -> EmbedParams:
    try:
        return EmbedParams(gain=args.gain, threshold_multiplier=args.threshold_mult)
    except ValueError as exc:
        raise CliError(EXIT_CAPACITY, str(exc)) from exc


def cmd_embed(args) -> int:
    key = _key(args.key)
    params = _embed_params(args)
    img = _load(args.input)
    payload = _payload(args.watermark)
    loc = _localize(img, args)
    try:
        marked, nroi = embed_fundus(img, payload, key, params, loc)
    except CapacityError as exc:
        raise CliError(EXIT_CAPACITY, str(exc)) from exc
    out = quantize(marked)
    meta = SidecarMeta(key, payload.width, payload.height, params.gain, params.threshold_multiplier, nroi.rect)
    try:
        Image.fromarray(out).save(args.output, format="PNG")
        write_sidecar(sidecar_path(args.output), meta)
    except OSError as exc:
        raise CliError(EXIT_UNWRITABLE, f"cannot write output: {exc}") from exc
    fidelity = psnr(green_channel(crop(img, nroi.rect)), green_channel(crop(out, nroi.rect)))
    r = nroi.rect
    _emit(
        output=args.output,
        sidecar=sidecar_path(args.output),
        payload_width=payload.width,
        payload_height=payload.height,
        zero_fraction=payload.zero_fraction,
        nroi_x=r.x, nroi_y=r.y, nroi_w=r.width, nroi_h=r.height,
        psnr_nroi=str(fidelity),
    )
    return EXIT_OK


def _extraction_inputs(args):
    meta = None
    path = Path(args.sidecar) if args.sidecar else sidecar_path(args.input)
    if args.sidecar or path.exists():
        try:
            meta = read_sidecar(path)
        except OSError as exc:
            raise CliError(EXIT_SIDECAR, f"cannot read sidecar {path}: {exc}") from exc
        except SidecarError as exc:
            raise CliError(EXIT_SIDECAR, f"malformed sidecar {path}: {exc}") from exc
    key = _key(args.key) if args.key else (meta.key if meta else None)
    width = args.width or (meta.payload_width if meta else None)
    height = args.height or (meta.payload_height if meta else None)
    if key is None or width is None or height is None:
        raise CliError(EXIT_SIDECAR, "need a sidecar or explicit --key, --width and --height")
    mult = args.threshold_mult
    if mult is None:
        mult = meta.threshold_multiplier if meta else 2.0
    return key, width, height, mult, meta


def cmd_extract(args) -> int:
    key, width, height, mult, meta = _extraction_inputs(args)
    img = _load(args.input)
    loc = _localize(img, args)
    rect = loc.nroi.rect
    if meta is not None and meta.nroi != rect:
        print(f"warning: relocated NROI {rect} differs from sidecar {meta.nroi}", file=sys.stderr)
    try:
        params = EmbedParams(threshold_multiplier=mult)
        report = extract(green_channel(crop(img, rect)), key, width, height, params)
    except (CapacityError, ValueError) as exc:
        raise CliError(EXIT_CAPACITY, f"cannot extract: {exc}") from exc
    try:
        write_png(args.output, report.filtered_image)
    except OSError as exc:
        raise CliError(EXIT_UNWRITABLE, f"cannot write output: {exc}") from exc
    c = report.correlations
    fields = dict(
        output=args.output,
        payload_width=width,
        payload_height=height,
        nroi_x=rect.x, nroi_y=rect.y, nroi_w=rect.width, nroi_h=rect.height,
        mean_correlation=report.mean_correlation,
        threshold=report.threshold,
        corr_min=float(c.min()),
        corr_max=float(c.max()),
        zero_bits=int(np.count_nonzero(~report.bits)),
    )
    if args.truth:
        try:
            truth = WatermarkPayload.from_image(read_gray(args.truth)).bits
        except (OSError, ValueError) as exc:
            raise CliError(EXIT_UNREADABLE, f"cannot read truth {args.truth}: {exc}") from exc
        if truth.shape != report.filtered_image.shape:
            raise CliError(EXIT_CAPACITY, f"truth shape {truth.shape} differs from payload size")
        fields["ber"] = bit_error_rate(truth, report.filtered_image)
        try:
            fields["truth_correlation"] = pearson(truth, report.filtered_image)
        except ValueError:
            # a constant recovery carries no information about the truth
            print("warning: recovered watermark is constant; correlation set to 0", file=sys.stderr)
            fields["truth_correlation"] = 0.0
    _emit(**fields)
    return EXIT_OK


STAGE_NAMES = (
    "01_gray",
    "02_preprocessed",
    "03_vessel_tree",
    "04_thinned",
    "05_corners_ellipse",
    "06_roi",
    "07_disc_binarized",
    "08_disc_diameter",
    "09_intensity_points",
    "10_search_space",
    "11_nroi",
    "12_green_nroi",
    "13_watermarked_nroi",
    "14_final_overlay",
)


def _dots(img, points, colour, radius=3) -> Image.Image:
    canvas = Image.fromarray(quantize(img))
    draw = ImageDraw.Draw(canvas)
    for x, y in points:
        draw.ellipse([x - radius, y - radius, x + radius, y + radius], outline=colour)
    return canvas


def _stage_images(img, loc: Localization, marked) -> dict:
    st = loc.stages
    rgb_skeleton = np.repeat((st["skeleton"] * 255.0)[:, :, None], 3, axis=2)
    corners = _dots(rgb_skeleton, [(c.x, c.y) for c in st["vessel_corners"]], (255, 0, 0))
    ex, ey = loc.ellipse.center
    ImageDraw.Draw(corners).ellipse([ex - 6, ey - 6, ex + 6, ey + 6], fill=(0, 255, 0))

    s = loc.search_space.rect
    ox = loc.disc.center[0]
    left = max(0, min(int(ox - loc.disc.diameter), s.x))
    right = min(img.shape[1], max(int(ox + loc.disc.diameter), s.x_end))
    roi = crop(img, Rect(left, 0, right - left, img.shape[0]))

    edges = np.repeat((st["disc_edges"] * 255.0)[:, :, None], 3, axis=2)
    diameter = _dots(edges, [(c.x, c.y) for c in st["disc_corners"]], (255, 0, 0))
    (x1, y1), (x2, y2) = loc.disc.endpoints
    draw = ImageDraw.Draw(diameter)
    draw.line([x1, y1, x2, y2], fill=(0, 255, 0), width=2)
    cx, cy, rad = loc.disc.center[0], loc.disc.center[1], loc.disc.radius
    draw.ellipse([cx - rad, cy - rad, cx + rad, cy + rad], outline=(0, 255, 255), width=2)

    points = _dots(img, loc.macula.candidates, (0, 0, 255), radius=5)
    space = _dots(img, loc.macula.candidates, (0, 0, 255), radius=5)
    ImageDraw.Draw(space).rectangle([s.x, s.y, s.x_end - 1, s.y_end - 1], outline=(255, 255, 0), width=2)

    r = loc.nroi.rect
    return {
        "01_gray": st["gray"],
        "02_preprocessed": st["enhanced"],
        "03_vessel_tree": st["vessels"],
        "04_thinned": st["skeleton"],
        "05_corners_ellipse": corners,
        "06_roi": roi,
        "07_disc_binarized": st["disc_mask"],
        "08_disc_diameter": diameter,
        "09_intensity_points": points,
        "10_search_space": space,
        "11_nroi": crop(img, r),
        "12_green_nroi": green_channel(crop(img, r)),
        "13_watermarked_nroi": green_channel(crop(marked, r)),
        "14_final_overlay": marked,
    }


def cmd_stages(args) -> int:
    img = _load(args.input)
    outdir = Path(args.outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        probe = outdir / ".write-probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise CliError(EXIT_UNWRITABLE, f"cannot write to {outdir}: {exc}") from exc
    key = _key(args.key)
    params = _embed_params(args)
    payload = _payload(args.watermark) if args.watermark else WatermarkPayload(stripe_payload())
    loc = _localize(img, args, keep_stages=True)
    try:
        marked, _ = embed_fundus(img, payload, key, params, loc)
    except CapacityError as exc:
        raise CliError(EXIT_CAPACITY, str(exc)) from exc
    marked = quantize(marked)
    written = []
    try:
        for name, image in _stage_images(img, loc, marked).items():
            path = outdir / f"{name}.png"
            if isinstance(image, Image.Image):
                image.save(path, format="PNG")
            else:
                write_png(path, image)
            written.append(path)
    except OSError as exc:
        raise CliError(EXIT_UNWRITABLE, f"cannot write stage image: {exc}") from exc
    _emit(stages=len(written), outdir=outdir)
    return EXIT_OK


def _add_localization_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("localization")
    g.add_argument("--search-length-factor", type=float, default=1.0,
                   help="search-space length in disc diameters (default 1.0)")
    g.add_argument("--wiener-window", type=int, default=7)
    g.add_argument("--median-window", type=int, default=22)
    g.add_argument("--area-open-min", type=int, default=100)
    thr = g.add_mutually_exclusive_group()
    thr.add_argument("--otsu", action="store_true", help="Otsu thresholding (default)")
    thr.add_argument("--threshold", type=float, default=None,
                     help="fixed binarization threshold as a fraction of 255")


def _add_embed_flags(p: argparse.ArgumentParser, key_required: bool) -> None:
    p.add_argument("--key", required=key_required, help="session key: text or hex:<bytes>")
    p.add_argument("--gain", type=float, default=2.0, help="embedding gain k (default 2.0)")
    p.add_argument("--threshold-mult", type=float, default=2.0,
                   help="extraction threshold multiplier (default 2.0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fundusmark",
        description="Blind watermarking inside the non-diagnostic region of fundus images.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("locate", help="find the optic disc, macula and NROI")
    p.add_argument("input")
    p.add_argument("--overlay", help="write an annotated PNG here")
    _add_localization_flags(p)
    p.set_defaults(func=cmd_locate)

    p = sub.add_parser("embed", help="watermark the NROI; writes PNG + .meta sidecar")
    p.add_argument("input")
    p.add_argument("watermark")
    p.add_argument("output")
    _add_embed_flags(p, key_required=True)
    _add_localization_flags(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("extract", help="recover a watermark blindly")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--sidecar", help="sidecar file (default: <input>.meta if present)")
    p.add_argument("--key", help="session key, overrides the sidecar")
    p.add_argument("--width", type=int, help="payload width, overrides the sidecar")
    p.add_argument("--height", type=int, help="payload height, overrides the sidecar")
    p.add_argument("--threshold-mult", type=float, default=None)
    p.add_argument("--truth", help="original watermark, to report BER and correlation")
    _add_localization_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("stages", help="dump every pipeline stage as numbered PNGs")
    p.add_argument("input")
    p.add_argument("outdir")
    p.add_argument("--watermark", help="watermark image (default: built-in stripe pattern)")
    _add_embed_flags(p, key_required=False)
    p.set_defaults(key="stages")
    _add_localization_flags(p)
    p.set_defaults(func=cmd_stages)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"fundusmark: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
