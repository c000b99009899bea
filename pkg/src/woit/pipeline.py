"""Frame renderer: the four-pass wavelet compositor and its competitors.

Passes over the casted frame:

    1. per-pixel depth bounds of transparent fragments
    2. build the wavelet coefficient buffer (optionally packed storage)
    3. accumulate shaded fragments weighted by reconstructed visibility,
       and accumulate screen-space refraction offsets
    4. composite over the opaque image, optionally through the chromatic
       aberration gather

Pixels are independent throughout; ``workers`` > 1 splits the frame into
row bands that render concurrently and concatenate deterministically.
Within one pixel the coefficient updates of pass 2 are commutative adds,
so fragment order never matters.

For compositing, the far depth bound is stretched so the farthest fragment
lands on the last interior cell boundary of the rank-N subdivision. An
interface strictly inside the open last cell is invisible to the basis
(every basis function integrates a vanishing sliver there), which would
exempt the farthest surface from attenuating the background; snapping it to
the boundary makes the last-cell reconstruction telescope to the exact
total absorbance.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import baselines, packing, wavelet
from .core import Spectrum3, TRANSMITTANCE_FLOOR
from .scene import FrameFragments, RayGrid, Scene, camera_rays, cast_frame

METHODS = ("wavelet", "abuffer", "wboit", "mlab4")

_NORM_EPS = 1e-6
_DIR_EPS = 1e-9


@dataclass(frozen=True)
class RenderConfig:
    method: str = "wavelet"
    rank: int = 3
    width: int = 256
    height: int = 256
    refraction: bool = False
    chromatic_aberration: bool = False
    cube_transmission: bool = False
    normalize: bool = True
    packed_storage: bool = False
    aberration_taps: int = 5
    refraction_scale: float = 40.0  # pixels per world unit of offset, at width 512
    workers: int = 1
    literal_spectral_t: bool = False
    cube_backface_only: bool = False
    wboit_weight: Tuple[float, float, float] = baselines.DEFAULT_WBOIT_WEIGHT

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; valid: {', '.join(METHODS)}")
        if not (0 <= self.rank <= 6):
            raise ValueError(f"rank must lie in [0, 6], got {self.rank}")
        if self.aberration_taps < 3 or self.aberration_taps % 2 == 0:
            raise ValueError("aberration taps must be odd and >= 3")
        if self.width < 1 or self.height < 1:
            raise ValueError("frame must be at least 1x1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class FrameBuffers:
    """Per-pixel working state of the wavelet pipeline, flattened row-major."""

    width: int
    height: int
    rank: int
    near: np.ndarray
    far: np.ndarray
    coeffs: np.ndarray
    accum: np.ndarray
    accum_weight: np.ndarray
    refraction_offset: np.ndarray
    opaque_depth: np.ndarray
    opaque_color: np.ndarray
    output: np.ndarray

    @classmethod
    def allocate(cls, frame: FrameFragments, rank: int) -> "FrameBuffers":
        npix = frame.npix
        slots = 1 << (rank + 1)
        return cls(frame.width, frame.height, rank,
                   near=np.full(npix, np.inf), far=np.full(npix, -np.inf),
                   coeffs=np.zeros((npix, slots, 3)),
                   accum=np.zeros((npix, 3)), accum_weight=np.zeros((npix, 3)),
                   refraction_offset=np.zeros((npix, 2)),
                   opaque_depth=frame.opaque_depth.copy(),
                   opaque_color=frame.opaque_color.copy(),
                   output=np.zeros((npix, 3)))

    def image(self) -> np.ndarray:
        return self.output.reshape(self.height, self.width, 3)


def eval_bounds(near: np.ndarray, far: np.ndarray, rank: int) -> Tuple[np.ndarray, np.ndarray]:
    """Bounds used for the depth mapping, padded by one cell on each side.

    The nearest and farthest fragments then land on the first and last
    interior cell boundaries of the rank-N subdivision: the far one stops
    being invisible to the basis (its step mass would otherwise fall in the
    open last cell, which every basis function integrates to a vanishing
    sliver), and neither extreme gets fully self-included when visibility is
    evaluated at its own depth. At rank 0 there is no interior boundary pair,
    so only the far side is stretched.
    """
    cells = 1 << (rank + 1)
    covered = near <= far
    rng = np.where(covered, far - near, 0.0)
    if cells > 2:
        margin = rng / (cells - 2)
        return (np.where(covered, near - margin, near),
                np.where(covered, far + margin, far))
    return near, np.where(covered, far + rng, far)


def step1_depth_bounds(frame: FrameFragments, bufs: FrameBuffers) -> None:
    """Tight min/max transparent depth per pixel; empty pixels stay at (inf, -inf)."""
    np.minimum.at(bufs.near, frame.pixel, frame.depth)
    np.maximum.at(bufs.far, frame.pixel, frame.depth)


def _fragment_z(frame: FrameFragments, bufs: FrameBuffers) -> np.ndarray:
    near_e, far_e = eval_bounds(bufs.near, bufs.far, bufs.rank)
    return wavelet.normalize_depth_array(frame.depth, near_e[frame.pixel],
                                         far_e[frame.pixel])


def _fragment_absorbance(frame: FrameFragments, cfg: RenderConfig) -> np.ndarray:
    t = frame.net_transmittance(cfg.cube_transmission, cfg.cube_backface_only)
    return -np.log(np.maximum(TRANSMITTANCE_FLOOR, t))


def step2_build(frame: FrameFragments, bufs: FrameBuffers, cfg: RenderConfig,
                counter: Optional[wavelet.TouchCounter] = None) -> None:
    """Scatter every fragment's absorbance step into its pixel's coefficients."""
    z = _fragment_z(frame, bufs)
    a = _fragment_absorbance(frame, cfg)
    wavelet.build_into(bufs.coeffs, frame.pixel, z, a, bufs.rank, counter)
    if cfg.packed_storage:
        bufs.coeffs = packing.roundtrip_coeff_array(bufs.coeffs)


def refract_dir(d: np.ndarray, n: np.ndarray, eta: float) -> Optional[np.ndarray]:
    """Snell refraction of unit direction d at unit normal n (n opposing d).

    Returns None on total internal reflection.
    """
    ci = -float(d @ n)
    s2 = eta * eta * (1.0 - ci * ci)
    if s2 > 1.0:
        return None
    return eta * d + (eta * ci - math.sqrt(1.0 - s2)) * n


def step3_accumulate(rays: RayGrid, frame: FrameFragments, bufs: FrameBuffers,
                     cfg: RenderConfig, counter: Optional[wavelet.TouchCounter] = None,
                     pixel_base: int = 0) -> None:
    """Accumulate radiance modulated by reconstructed visibility, plus refraction offsets."""
    if frame.pixel.size == 0:
        return
    z = _fragment_z(frame, bufs)
    vhat = np.exp(-wavelet.interp_absorbance_batch(bufs.coeffs, frame.pixel, z,
                                                   bufs.rank, counter))
    np.add.at(bufs.accum, frame.pixel, frame.radiance * frame.alpha[:, None] * vhat)
    # Weight by per-channel net opacity, not raw coverage: (1 - t) sums
    # telescope to 1 - v_total, so the normalized composite stays exact for
    # tinted and volumetric fragments too (for transmission-free fragments
    # 1 - t equals alpha and the two weights coincide).
    opacity = 1.0 - frame.net_transmittance(cfg.cube_transmission, cfg.cube_backface_only)
    np.add.at(bufs.accum_weight, frame.pixel, opacity * vhat)
    if not cfg.refraction:
        return

    sel = np.nonzero(frame.ior > 1.0)[0]
    if sel.size == 0:
        return
    pix = frame.pixel[sel]
    d = rays.dirs[pixel_base + pix]
    n = frame.normal[sel]
    ci = -(d * n).sum(axis=1)
    eta = 1.0 / frame.ior[sel]
    s2 = eta * eta * (1.0 - ci * ci)
    t_opq = bufs.opaque_depth[pix]
    ok = (ci > _DIR_EPS) & (s2 <= 1.0) & np.isfinite(t_opq)

    root = np.sqrt(np.clip(1.0 - s2, 0.0, None))
    tdir = eta[:, None] * d + (eta * ci - root)[:, None] * n
    tdir_f = tdir @ rays.forward
    dir_f = d @ rays.forward
    # Hit of the refracted ray on the plane at the pixel's opaque depth,
    # versus the unrefracted hit of the primary ray on the same plane.
    z_plane = t_opq * dir_f
    p_f = frame.depth[sel] * dir_f
    ok &= tdir_f > _DIR_EPS
    s = np.where(ok, (z_plane - p_f) / np.where(ok, tdir_f, 1.0), 0.0)
    q = frame.depth[sel, None] * d + s[:, None] * tdir
    q0 = t_opq[:, None] * d
    dw = q - q0
    scale = cfg.refraction_scale * (bufs.width / 512.0)
    off = np.stack([dw @ rays.right, -(dw @ rays.up)], axis=1) * scale
    off = np.where((ok & np.isfinite(off).all(axis=1))[:, None], off, 0.0)
    np.add.at(bufs.refraction_offset, pix, off)


def smoothstep(e0: float, e1: float, x: float) -> float:
    u = (x - e0) / (e1 - e0)
    u = min(1.0, max(0.0, u))
    return u * u * (3.0 - 2.0 * u)


def spectral_weight(i: int, k: int, literal_t: bool = False) -> Spectrum3:
    """Per-channel weight of aberration tap i of k.

    The tap parameter t spans [0, 1] across the segment, ramping red to
    green to blue. ``literal_t`` switches to the 0.5 + 2i/(k-1) paramet-
    rization kept for comparison, which saturates to blue after the first
    tap.
    """
    if not (0 <= i < k):
        raise ValueError(f"tap index {i} out of range for k={k}")
    t = 0.5 + 2.0 * i / (k - 1) if literal_t else i / (k - 1)
    wr = smoothstep(0.5, 1.0 / 3.0, t)
    wb = smoothstep(0.5, 2.0 / 3.0, t)
    return Spectrum3(wr, 1.0 - wr - wb, wb)


def bilinear_sample(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Edge-clamped bilinear lookup of (H, W, 3) at fractional pixel coords."""
    h, w = img.shape[:2]
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    tx = (x - x0)[..., None]
    ty = (y - y0)[..., None]
    top = img[y0, x0] * (1.0 - tx) + img[y0, x1] * tx
    bot = img[y1, x0] * (1.0 - tx) + img[y1, x1] * tx
    return top * (1.0 - ty) + bot * ty


def chromatic_gather(img: np.ndarray, px: np.ndarray, py: np.ndarray,
                     offset: np.ndarray, k: int, literal_t: bool = False) -> np.ndarray:
    """Spectrally weighted background gather along the refraction vector.

    Taps run from the unrefracted pixel (red end) through the refracted tap
    (center) to twice the offset (blue end): the segment is centered on the
    refracted sample with extremes at +-offset around it. Each channel is
    normalized by its own total weight, so a constant background is
    reproduced exactly and a zero offset degenerates to the plain sample.
    """
    if k % 2 == 0 or k < 3:
        raise ValueError("tap count must be odd and >= 3")
    num = np.zeros(px.shape + (3,))
    den = np.zeros(3)
    for i in range(k):
        w = spectral_weight(i, k, literal_t).as_array()
        fac = 2.0 * i / (k - 1)
        s = bilinear_sample(img, px + offset[..., 0] * fac, py + offset[..., 1] * fac)
        num += w * s
        den += w
    center = bilinear_sample(img, px + offset[..., 0], py + offset[..., 1])
    safe = den > 0.0
    out = np.where(safe, num / np.where(safe, den, 1.0), center)
    return out


def step4_composite(bufs: FrameBuffers, cfg: RenderConfig,
                    counter: Optional[wavelet.TouchCounter] = None,
                    pixel_base: int = 0, full_opaque_image: Optional[np.ndarray] = None) -> None:
    """Blend accumulated transparents over the (possibly refracted) background."""
    v_total = np.exp(-wavelet.total_absorbance_batch(bufs.coeffs, bufs.rank, counter))
    npix = bufs.near.size
    img = full_opaque_image
    if img is None:
        img = bufs.opaque_color.reshape(-1, bufs.width, 3)
    gpix = pixel_base + np.arange(npix)
    px = (gpix % bufs.width).astype(np.float64)
    py = (gpix // bufs.width).astype(np.float64)
    if cfg.chromatic_aberration:
        background = chromatic_gather(img, px, py, bufs.refraction_offset,
                                      cfg.aberration_taps, cfg.literal_spectral_t)
    elif cfg.refraction:
        background = bilinear_sample(img, px + bufs.refraction_offset[:, 0],
                                     py + bufs.refraction_offset[:, 1])
    else:
        background = bufs.opaque_color
    if cfg.normalize:
        avg = bufs.accum / np.maximum(_NORM_EPS, bufs.accum_weight)
        bufs.output[:] = avg * (1.0 - v_total) + background * v_total
    else:
        bufs.output[:] = bufs.accum + background * v_total


def _slice_frame(frame: FrameFragments, p0: int, p1: int) -> FrameFragments:
    lo, hi = frame.offsets[p0], frame.offsets[p1]
    return FrameFragments(frame.width, frame.height,
                          frame.pixel[lo:hi] - p0, frame.depth[lo:hi], frame.alpha[lo:hi],
                          frame.trans[lo:hi], frame.radiance[lo:hi], frame.normal[lo:hi],
                          frame.ior[lo:hi], frame.backface[lo:hi],
                          frame.offsets[p0:p1 + 1] - lo,
                          frame.opaque_depth[p0:p1], frame.opaque_color[p0:p1])


def _wavelet_band(rays: RayGrid, frame: FrameFragments, cfg: RenderConfig,
                  full_img: np.ndarray, p0: int, p1: int,
                  counter: Optional[wavelet.TouchCounter]) -> FrameBuffers:
    band = _slice_frame(frame, p0, p1) if (p0, p1) != (0, frame.npix) else frame
    bufs = FrameBuffers.allocate(band, cfg.rank)
    step1_depth_bounds(band, bufs)
    step2_build(band, bufs, cfg, counter)
    step3_accumulate(rays, band, bufs, cfg, counter, pixel_base=p0)
    step4_composite(bufs, cfg, counter, pixel_base=p0, full_opaque_image=full_img)
    return bufs


def render_frame(scene: Scene, cfg: RenderConfig,
                 counter: Optional[wavelet.TouchCounter] = None,
                 frame: Optional[FrameFragments] = None) -> np.ndarray:
    """Render the scene with the configured method; returns linear (H, W, 3)."""
    rays = camera_rays(scene.camera, cfg.width, cfg.height)
    if frame is None:
        frame = cast_frame(scene, cfg.width, cfg.height, rays)

    if cfg.method != "wavelet":
        bg = frame.opaque_color
        if cfg.method == "abuffer":
            out = baselines.abuffer_frame(frame, bg, cfg.cube_transmission)
        elif cfg.method == "mlab4":
            out = baselines.mlab_frame(frame, bg, 4, cfg.cube_transmission)
        else:
            near = np.full(frame.npix, np.inf)
            far = np.full(frame.npix, -np.inf)
            np.minimum.at(near, frame.pixel, frame.depth)
            np.maximum.at(far, frame.pixel, frame.depth)
            out = baselines.wboit_frame(frame, bg, near, far, cfg.cube_transmission,
                                        cfg.wboit_weight)
        return out.reshape(cfg.height, cfg.width, 3)

    full_img = frame.opaque_color.reshape(cfg.height, cfg.width, 3)
    npix = frame.npix
    if cfg.workers == 1 or cfg.height < 2 * cfg.workers:
        bufs = _wavelet_band(rays, frame, cfg, full_img, 0, npix, counter)
        return bufs.output.reshape(cfg.height, cfg.width, 3)

    rows = np.linspace(0, cfg.height, cfg.workers + 1).astype(int)
    spans = [(rows[i] * cfg.width, rows[i + 1] * cfg.width)
             for i in range(cfg.workers) if rows[i] < rows[i + 1]]
    counters = [wavelet.TouchCounter() if counter is not None else None for _ in spans]
    with ThreadPoolExecutor(max_workers=len(spans)) as pool:
        parts = list(pool.map(
            lambda args: _wavelet_band(rays, frame, cfg, full_img, args[0][0], args[0][1], args[1]),
            zip(spans, counters)))
    if counter is not None:
        for c in counters:
            counter.record_insert(c.inserts, c.insert_touches)
            counter.record_eval(c.evals, c.eval_touches)
    out = np.concatenate([b.output for b in parts], axis=0)
    return out.reshape(cfg.height, cfg.width, 3)
