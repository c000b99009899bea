"""Command-line surface: curve export, rendering, comparison tables, instrumentation.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__, baselines, curves, metrics, packing, ppm, wavelet
from .pipeline import METHODS, RenderConfig, render_frame
from .scene import PRESET_NAMES, cast_fragments, cast_frame, resolve_scene

_GRAPH_GRID = 65  # ray-picking grid for `graph`; center pixel is exactly on axis


def _onoff(value: str) -> bool:
    v = value.lower()
    if v in ("on", "true", "1", "yes"):
        return True
    if v in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on|off, got {value!r}")


def _default_workers() -> int:
    env = os.environ.get("WOIT_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def _parse_methods(text: str):
    names = [m.strip() for m in text.split(",") if m.strip()]
    if not names:
        raise ValueError("no methods given")
    for m in names:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; valid: {', '.join(METHODS)}")
    return names


def _parse_weight(text: str):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise ValueError("wboit weight takes gain,min,max")
    return tuple(parts)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scene", required=True,
                   help=f"preset name ({', '.join(PRESET_NAMES)}) or scene file path")
    p.add_argument("--rank", type=int, default=3, help="wavelet rank N (default 3)")
    p.add_argument("--workers", type=int, default=None,
                   help="pixel worker count (default: WOIT_WORKERS or cpu count)")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="woit",
                                 description="wavelet order-independent transparency toolkit")
    ap.add_argument("--version", action="version", version=f"woit {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("graph", help="export visibility curves along one pixel's ray")
    _add_common(g)
    g.add_argument("--methods", default="wavelet", help="comma list of methods to plot")
    g.add_argument("--samples", type=int, default=512)
    g.add_argument("--pixel", default=None, help="x,y pixel on a 65x65 grid (default center)")
    g.add_argument("--channel", default="luminance", choices=sorted(curves.CHANNELS))
    g.add_argument("--cube", type=_onoff, default=False)
    g.add_argument("--out", required=True)

    r = sub.add_parser("render", help="render the scene to a binary PPM")
    _add_common(r)
    r.add_argument("--method", default="wavelet", choices=METHODS)
    r.add_argument("--width", type=int, default=256)
    r.add_argument("--height", type=int, default=256)
    r.add_argument("--refraction", type=_onoff, default=False)
    r.add_argument("--aberration", type=_onoff, default=False)
    r.add_argument("--cube", type=_onoff, default=False)
    r.add_argument("--packed", type=_onoff, default=False)
    r.add_argument("--normalize", type=_onoff, default=True)
    r.add_argument("--literal-spectral-t", type=_onoff, default=False)
    r.add_argument("--cube-backface-only", type=_onoff, default=False)
    r.add_argument("--taps", type=int, default=5, help="aberration tap count (odd)")
    r.add_argument("--refraction-scale", type=float, default=40.0)
    r.add_argument("--wboit-weight", type=_parse_weight, default=baselines.DEFAULT_WBOIT_WEIGHT)
    r.add_argument("--seed", type=int, default=None, help="override the scene rng seed")
    r.add_argument("--out", required=True)

    c = sub.add_parser("compare", help="image and curve error table against the oracle")
    _add_common(c)
    c.add_argument("--methods", default="wavelet,wboit,mlab4")
    c.add_argument("--width", type=int, default=192)
    c.add_argument("--height", type=int, default=192)
    c.add_argument("--samples", type=int, default=512)
    c.add_argument("--cube", type=_onoff, default=False)
    c.add_argument("--normalize", type=_onoff, default=True)
    c.add_argument("--wboit-weight", type=_parse_weight, default=baselines.DEFAULT_WBOIT_WEIGHT)
    c.add_argument("--out", required=True)

    b = sub.add_parser("bench", help="wall time and bandwidth accounting for one render")
    _add_common(b)
    b.add_argument("--method", default="wavelet", choices=("wavelet",))
    b.add_argument("--width", type=int, default=128)
    b.add_argument("--height", type=int, default=128)
    return ap


def _cmd_graph(args) -> int:
    scene = resolve_scene(args.scene)
    methods = _parse_methods(args.methods)
    if args.pixel is None:
        px = py = _GRAPH_GRID // 2
    else:
        sx, sy = args.pixel.split(",")
        px, py = int(sx), int(sy)
    fs, _, _ = cast_fragments(scene, px, py, _GRAPH_GRID, _GRAPH_GRID)
    rc = curves.extract_curves(fs, methods, args.rank, args.samples, args.channel, args.cube)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("z,truth," + ",".join(methods) + "\n")
        for i in range(rc.z.size):
            row = [rc.z[i], rc.truth[i]] + [rc.methods[m][i] for m in methods]
            fh.write(",".join(f"{v:.6f}" for v in row) + "\n")
    return 0


def _cmd_render(args) -> int:
    scene = resolve_scene(args.scene)
    if args.seed is not None:
        scene = replace(scene, rng_seed=args.seed)
    cfg = RenderConfig(method=args.method, rank=args.rank, width=args.width,
                       height=args.height, refraction=args.refraction,
                       chromatic_aberration=args.aberration, cube_transmission=args.cube,
                       normalize=args.normalize, packed_storage=args.packed,
                       aberration_taps=args.taps, refraction_scale=args.refraction_scale,
                       workers=args.workers or _default_workers(),
                       literal_spectral_t=args.literal_spectral_t,
                       cube_backface_only=args.cube_backface_only,
                       wboit_weight=args.wboit_weight)
    img = render_frame(scene, cfg)
    ppm.write_ppm(args.out, img)
    return 0


def _cmd_compare(args) -> int:
    scene = resolve_scene(args.scene)
    methods = _parse_methods(args.methods)
    w, h = args.width, args.height
    frame = cast_frame(scene, w, h)
    base = RenderConfig(method="abuffer", rank=args.rank, width=w, height=h,
                        cube_transmission=args.cube, workers=args.workers or 1)
    ref = render_frame(scene, base, frame=frame)
    fs, _, _ = cast_fragments(scene, w // 2, h // 2, w, h)
    rc = curves.extract_curves(fs, [m for m in methods if m in curves.CURVE_METHODS],
                               args.rank, args.samples, cube_transmission=args.cube)
    truth_curve = rc.truth
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("method,rmse_vs_abuffer,psnr_db,curve_l1,curve_l2,curve_linf\n")
        for m in methods:
            cfg = replace(base, method=m, normalize=args.normalize,
                          wboit_weight=args.wboit_weight)
            img = render_frame(scene, cfg, frame=frame)
            rmse = metrics.image_rmse(img, ref)
            psnr = metrics.image_psnr(img, ref)
            d = np.abs(rc.methods[m] - truth_curve)
            psnr_txt = "inf" if psnr == metrics.PSNR_IDENTICAL else f"{psnr:.3f}"
            fh.write(f"{m},{rmse:.6f},{psnr_txt},{d.mean():.6f},"
                     f"{np.sqrt((d * d).mean()):.6f},{d.max():.6f}\n")
    return 0


def _cmd_bench(args) -> int:
    scene = resolve_scene(args.scene)
    counter = wavelet.TouchCounter()
    cfg = RenderConfig(method="wavelet", rank=args.rank, width=args.width,
                       height=args.height, workers=args.workers or _default_workers())
    t0 = time.perf_counter()
    frame = cast_frame(scene, args.width, args.height)
    render_frame(scene, cfg, counter=counter, frame=frame)
    dt = time.perf_counter() - t0
    print(f"scene: {args.scene}")
    print(f"method: wavelet rank {args.rank}")
    print(f"resolution: {args.width}x{args.height}")
    print(f"workers: {cfg.workers}")
    print(f"wall_time_s: {dt:.3f}")
    print(f"fragments: {frame.pixel.size}")
    print(f"touches_per_insert: {counter.per_insert:.0f}")
    print(f"touches_per_eval: {counter.per_eval:.0f}")
    print(f"bytes_per_pixel: {packing.bytes_per_pixel(args.rank)}")
    return 0


_COMMANDS = {"graph": _cmd_graph, "render": _cmd_render,
             "compare": _cmd_compare, "bench": _cmd_bench}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
