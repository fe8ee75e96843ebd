"""Command-line interface: encode, decode, metrics, render, synth."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import pipeline
from .eia import (
    CodecConfig,
    EiaGrid,
    PROFILES,
    grid_from_rgb,
    grid_to_rgb,
    yuv_to_rgb_image,
)
from .errors import CodecError, ContainerError, PayloadError
from .imgio import read_image, write_image
from .metrics import quality_report, render_central_view
from .sideinfo import MAX_OFFSET
from .synthetic import SceneSpec, TEXTURES, generate

EXIT_CONTAINER_ERROR = 3
EXIT_PAYLOAD_ERROR = 4
EXIT_ERROR = 1


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("EMR4D_THREADS", "1")))
    except ValueError:
        return 1


def _load_grid(path: str, ei_rows: int, ei_cols: int, ei_size: int) -> EiaGrid:
    img = read_image(path)
    want = (ei_rows * ei_size, ei_cols * ei_size)
    if img.shape[:2] != want:
        raise CodecError(f"image is {img.shape[:2]}, geometry expects {want}")
    if img.ndim == 2:
        # Grayscale input: treat as the Y plane with neutral chroma.
        flat = np.full_like(img, 128)
        return EiaGrid(ei_rows, ei_cols, ei_size, img, flat, flat)
    return grid_from_rgb(img, ei_rows, ei_cols, ei_size)


def _add_geometry(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ei-rows", type=int, required=True, help="EIA rows (m)")
    p.add_argument("--ei-cols", type=int, required=True, help="EIA columns (n)")
    p.add_argument("--ei-size", type=int, default=75, help="EI side in pixels")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="emr4d",
                                 description="Mixture-regression light field codec")
    sub = ap.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="encode an EIA image to .emr4d")
    enc.add_argument("--input", required=True)
    enc.add_argument("--output", required=True)
    _add_geometry(enc)
    enc.add_argument("--profile", choices=sorted(PROFILES))
    enc.add_argument("--lambda", dest="rd_lambda", type=float)
    enc.add_argument("--interval", type=int)
    enc.add_argument("--gop", type=int, default=4)
    enc.add_argument("--threads", type=int, default=_default_threads())
    enc.add_argument("--seed", type=int, default=0)
    enc.add_argument("--stats", help="also write the stats JSON to this path")

    dec = sub.add_parser("decode", help="decode .emr4d to a PNG image")
    dec.add_argument("--input", required=True)
    dec.add_argument("--output", required=True)
    dec.add_argument("--no-postfilter", action="store_true")
    dec.add_argument("--dump-key-eia", help="write the intermediate key-EIA image")
    dec.add_argument("--dump-offsets", help="write decoded offset matrices as JSON")
    dec.add_argument("--dump-shadow", help="write decoded shadow coefficients as JSON")

    met = sub.add_parser("metrics", help="PSNR/SSIM between two images")
    met.add_argument("--reference", required=True)
    met.add_argument("--decoded", required=True)
    met.add_argument("--bits", type=int, help="bitstream size for bpp reporting")

    ren = sub.add_parser("render", help="extract the central rendered view")
    ren.add_argument("--input", required=True)
    ren.add_argument("--output", required=True)
    _add_geometry(ren)

    syn = sub.add_parser("synth", help="generate a synthetic EIA dataset")
    syn.add_argument("--output", required=True, help="output PNG path")
    syn.add_argument("--rows", type=int, default=8)
    syn.add_argument("--cols", type=int, default=8)
    syn.add_argument("--ei-size", type=int, default=75)
    syn.add_argument("--texture", choices=TEXTURES, default="noise")
    syn.add_argument("--parallax-row", type=int, default=0)
    syn.add_argument("--parallax-col", type=int, default=4)
    syn.add_argument("--shadows", action="store_true")
    syn.add_argument("--seam", type=int, help="seam gray value (omit for none)")
    syn.add_argument("--seed", type=int, default=0)
    return ap


def _cfg_from_args(args) -> CodecConfig:
    if args.profile and (args.rd_lambda is not None or args.interval is not None):
        raise CodecError("--profile conflicts with --lambda/--interval")
    if args.profile:
        return CodecConfig.from_profile(args.profile, gop=args.gop)
    if args.rd_lambda is None or args.interval is None:
        raise CodecError("provide --profile or both --lambda and --interval")
    return CodecConfig(interval=args.interval, gop=args.gop,
                       rd_lambda=args.rd_lambda)


def _cmd_encode(args) -> int:
    cfg = _cfg_from_args(args)
    grid = _load_grid(args.input, args.ei_rows, args.ei_cols, args.ei_size)
    result = pipeline.encode(grid, cfg, seed=args.seed, threads=args.threads)
    with open(args.output, "wb") as fh:
        fh.write(result.data)
    text = pipeline.stats_json(result.stats)
    if args.stats:
        with open(args.stats, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


def _cmd_decode(args) -> int:
    with open(args.input, "rb") as fh:
        data = fh.read()
    decoded = pipeline.decode(data, postfilter=not args.no_postfilter)
    write_image(args.output, grid_to_rgb(decoded.grid))
    if args.dump_key_eia:
        write_image(args.dump_key_eia, grid_to_rgb(decoded.key_grid))
    if args.dump_offsets:
        with open(args.dump_offsets, "w") as fh:
            json.dump({"col_offsets": decoded.parallax.col_offsets.tolist(),
                       "row_offsets": decoded.parallax.row_offsets.tolist()}, fh)
    if args.dump_shadow:
        with open(args.dump_shadow, "w") as fh:
            json.dump({"coeffs": decoded.shadow.coeffs.tolist(),
                       "present": decoded.shadow.present.tolist()}, fh)
    return 0


def _planes(img: np.ndarray):
    from .eia import rgb_to_yuv_planes
    if img.ndim == 2:
        flat = np.full_like(img, 128)
        return img, flat, flat
    return rgb_to_yuv_planes(img)


def _cmd_metrics(args) -> int:
    ref = read_image(args.reference)
    dec = read_image(args.decoded)
    if ref.shape != dec.shape:
        raise CodecError(f"image dimensions differ: {ref.shape} vs {dec.shape}")
    bpp = None
    if args.bits is not None:
        bpp = args.bits / float(ref.shape[0] * ref.shape[1])
    report = quality_report(_planes(ref), _planes(dec), bpp=bpp)
    print(report.to_json())
    return 0


def _cmd_render(args) -> int:
    img = read_image(args.input)
    want = (args.ei_rows * args.ei_size, args.ei_cols * args.ei_size)
    if img.shape[:2] != want:
        raise CodecError(f"image is {img.shape[:2]}, geometry expects {want}")
    view = render_central_view(img, args.ei_rows, args.ei_cols, args.ei_size)
    write_image(args.output, view)
    return 0


def _cmd_synth(args) -> int:
    spec = SceneSpec(ei_rows=args.rows, ei_cols=args.cols, ei_size=args.ei_size,
                     texture=args.texture, parallax_row=args.parallax_row,
                     parallax_col=args.parallax_col, shadows=args.shadows,
                     seam_value=args.seam, seed=args.seed)
    grid, parallax, shadow = generate(spec)
    write_image(args.output, yuv_to_rgb_image(grid.y, grid.u, grid.v))
    truth_path = args.output.rsplit(".", 1)[0] + ".truth.json"
    with open(truth_path, "w") as fh:
        json.dump({
            "parallax_row": args.parallax_row,
            "parallax_col": args.parallax_col,
            "max_offset_bound": MAX_OFFSET,
            "shadow_coeffs": shadow.coeffs.tolist(),
            "shadow_present": shadow.present.tolist(),
            "seed": args.seed,
        }, fh)
    print(json.dumps({"image": args.output, "truth": truth_path}))
    return 0


_COMMANDS = {
    "encode": _cmd_encode,
    "decode": _cmd_decode,
    "metrics": _cmd_metrics,
    "render": _cmd_render,
    "synth": _cmd_synth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ContainerError as exc:
        print(f"container error: {exc}", file=sys.stderr)
        return EXIT_CONTAINER_ERROR
    except PayloadError as exc:
        section = f" in section {exc.section}" if exc.section else ""
        print(f"payload error{section}: {exc}", file=sys.stderr)
        return EXIT_PAYLOAD_ERROR
    except (CodecError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
