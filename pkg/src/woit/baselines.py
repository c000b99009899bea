"""Reference and competitor compositing methods used for quality comparison.

``abuffer_composite`` is the ground truth: it sorts the fragment stream and
composites front to back exactly. ``wboit_composite`` and ``mlab_composite``
are the order-independent baselines the wavelet method is measured against.
Each scalar function has a batch twin operating on a whole frame of CSR
fragment arrays; the twins implement identical arithmetic and are checked
against the scalar forms in the tests.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .core import DepthBounds, FragmentStream, Spectrum3, net_transmittance, sorted_stream

DEFAULT_WBOIT_WEIGHT = (10.0, 0.01, 3000.0)  # gain, clamp min, clamp max
_WEIGHT_EPS = 1e-5
_NORM_EPS = 1e-6


@dataclass
class MlabNode:
    """One blended layer: premultiplied color, transmittance, representative depth."""

    color: np.ndarray
    trans: np.ndarray
    depth: float


def abuffer_composite(fs: FragmentStream, background: Spectrum3,
                      cube_transmission: bool = False) -> Spectrum3:
    """Exact sorted front-to-back compositing; the image oracle for all tests."""
    acc = np.zeros(3, dtype=np.float64)
    vis = np.ones(3, dtype=np.float64)
    for f in sorted_stream(fs):
        acc += f.radiance.as_array() * f.alpha * vis
        vis = vis * net_transmittance(f, cube_transmission)
    acc += background.as_array() * vis
    return Spectrum3.from_array(acc)


def wboit_weight(z: float, params: Tuple[float, float, float] = DEFAULT_WBOIT_WEIGHT) -> float:
    """Depth falloff weight on normalized z in [0, 1]."""
    gain, lo, hi = params
    return min(max(gain / (_WEIGHT_EPS + z * z + z ** 6), lo), hi)


def wboit_composite(fs: FragmentStream, background: Spectrum3, depth_bounds: DepthBounds,
                    cube_transmission: bool = False,
                    weight_params: Tuple[float, float, float] = DEFAULT_WBOIT_WEIGHT) -> Spectrum3:
    """Weighted, blended OIT: a depth-weighted average revealed by net coverage."""
    if not fs:
        return background
    accum = np.zeros(3, dtype=np.float64)
    weight = 0.0
    reveal = np.ones(3, dtype=np.float64)
    rng = depth_bounds.far - depth_bounds.near
    for f in fs:
        z = (f.depth - depth_bounds.near) / rng if rng > 0.0 else 0.5
        w = wboit_weight(min(max(z, 0.0), 1.0), weight_params)
        accum += w * f.radiance.as_array() * f.alpha
        weight += w * f.alpha
        reveal = reveal * net_transmittance(f, cube_transmission)
    avg = accum / max(_NORM_EPS, weight)
    out = avg * (1.0 - reveal) + background.as_array() * reveal
    return Spectrum3.from_array(out)


def mlab_nodes(fs: FragmentStream, k: int = 4,
               cube_transmission: bool = False) -> List[MlabNode]:
    """Stream fragments into k depth-sorted blending nodes.

    Insertion order breaks depth ties; on overflow the two farthest nodes
    merge, compositing the farther under the nearer.
    """
    if k < 2:
        raise ValueError("mlab needs at least 2 slots")
    nodes: List[MlabNode] = []
    depths: List[float] = []
    for f in fs:
        pos = bisect.bisect_right(depths, f.depth)
        nodes.insert(pos, MlabNode(f.radiance.as_array() * f.alpha,
                                   net_transmittance(f, cube_transmission), f.depth))
        depths.insert(pos, f.depth)
        if len(nodes) > k:
            far = nodes.pop()
            depths.pop()
            near = nodes[-1]
            near.color = near.color + near.trans * far.color
            near.trans = near.trans * far.trans
    return nodes


def mlab_composite(fs: FragmentStream, background: Spectrum3, k: int = 4,
                   cube_transmission: bool = False) -> Spectrum3:
    """Multi-layer alpha blending with k slots.

    Streams of at most k fragments reproduce the sorted oracle exactly; deeper
    stacks lose whatever the overflow merges misorder.
    """
    acc = np.zeros(3, dtype=np.float64)
    vis = np.ones(3, dtype=np.float64)
    for n in mlab_nodes(fs, k, cube_transmission):
        acc += n.color * vis
        vis = vis * n.trans
    acc += background.as_array() * vis
    return Spectrum3.from_array(acc)


# ---------------------------------------------------------------------------
# Frame-sized batch versions over CSR fragment arrays (see scene.FrameFragments).

def _rank_groups(pix: np.ndarray, offsets: np.ndarray, order: np.ndarray):
    """Split sorted fragment indices into per-pixel rank groups.

    ``order`` must sort fragments by (pixel, sort key); yields, for rank r,
    the sorted positions of each pixel's r-th fragment.
    """
    counts = np.diff(offsets)
    if order.size == 0:
        return
    pos = np.arange(order.size) - np.repeat(offsets[:-1], counts)
    by_pos = np.argsort(pos, kind="stable")
    max_rank = int(counts.max())
    bounds = np.searchsorted(pos[by_pos], np.arange(max_rank + 1))
    for r in range(max_rank):
        yield by_pos[bounds[r]:bounds[r + 1]]


def abuffer_frame(frame, background: np.ndarray, cube_transmission: bool = False) -> np.ndarray:
    """Batch exact compositing: (pixels, 3) image over per-pixel backgrounds."""
    npix = frame.offsets.size - 1
    acc = np.zeros((npix, 3), dtype=np.float64)
    vis = np.ones((npix, 3), dtype=np.float64)
    order = np.lexsort((np.arange(frame.pixel.size), frame.depth, frame.pixel))
    pix = frame.pixel[order]
    color = (frame.radiance * frame.alpha[:, None])[order]
    trans = frame.net_transmittance(cube_transmission)[order]
    for sel in _rank_groups(frame.pixel, frame.offsets, order):
        p = pix[sel]
        acc[p] += color[sel] * vis[p]
        vis[p] = vis[p] * trans[sel]
    return acc + background * vis


def wboit_frame(frame, background: np.ndarray, near: np.ndarray, far: np.ndarray,
                cube_transmission: bool = False,
                weight_params: Tuple[float, float, float] = DEFAULT_WBOIT_WEIGHT) -> np.ndarray:
    """Batch weighted, blended OIT over per-pixel depth bounds."""
    gain, lo, hi = weight_params
    npix = frame.offsets.size - 1
    rng = far[frame.pixel] - near[frame.pixel]
    z = np.where(rng > 0.0, (frame.depth - near[frame.pixel]) / np.where(rng > 0.0, rng, 1.0), 0.5)
    z = np.clip(z, 0.0, 1.0)
    w = np.clip(gain / (_WEIGHT_EPS + z * z + z ** 6), lo, hi)
    accum = np.zeros((npix, 3), dtype=np.float64)
    weight = np.zeros(npix, dtype=np.float64)
    reveal = np.ones((npix, 3), dtype=np.float64)
    np.add.at(accum, frame.pixel, (w * frame.alpha)[:, None] * frame.radiance)
    np.add.at(weight, frame.pixel, w * frame.alpha)
    np.multiply.at(reveal, frame.pixel, frame.net_transmittance(cube_transmission))
    avg = accum / np.maximum(_NORM_EPS, weight)[:, None]
    return avg * (1.0 - reveal) + background * reveal


def mlab_frame(frame, background: np.ndarray, k: int = 4,
               cube_transmission: bool = False) -> np.ndarray:
    """Batch MLAB-k: vectorized streaming insertion with farthest-pair merging."""
    if k < 2:
        raise ValueError("mlab needs at least 2 slots")
    npix = frame.offsets.size - 1
    node_d = np.full((npix, k), np.inf)
    node_c = np.zeros((npix, k, 3))
    node_t = np.ones((npix, k, 3))
    # Insertion order must match the scalar stream order, so sort by rank only.
    order = np.lexsort((np.arange(frame.pixel.size), frame.pixel))
    pix = frame.pixel[order]
    depth = frame.depth[order]
    color = (frame.radiance * frame.alpha[:, None])[order]
    trans = frame.net_transmittance(cube_transmission)[order]
    for sel in _rank_groups(frame.pixel, frame.offsets, order):
        p = pix[sel]
        d = depth[sel]
        D, C, T = node_d[p], node_c[p], node_t[p]
        pos = (D <= d[:, None]).sum(axis=1)
        B = sel.size
        nD = np.empty((B, k + 1))
        nC = np.empty((B, k + 1, 3))
        nT = np.empty((B, k + 1, 3))
        for j in range(k + 1):
            is_new = pos == j
            if j < k:
                keep = j < pos
                shift_src = max(j - 1, 0)
                nD[:, j] = np.where(keep, D[:, j], np.where(is_new, d, D[:, shift_src]))
                nC[:, j] = np.where(keep[:, None], C[:, j], np.where(is_new[:, None], color[sel], C[:, shift_src]))
                nT[:, j] = np.where(keep[:, None], T[:, j], np.where(is_new[:, None], trans[sel], T[:, shift_src]))
            else:
                nD[:, j] = np.where(is_new, d, D[:, k - 1])
                nC[:, j] = np.where(is_new[:, None], color[sel], C[:, k - 1])
                nT[:, j] = np.where(is_new[:, None], trans[sel], T[:, k - 1])
        over = np.isfinite(nD[:, k])
        merged_c = nC[:, k - 1] + nT[:, k - 1] * nC[:, k]
        merged_t = nT[:, k - 1] * nT[:, k]
        nC[:, k - 1] = np.where(over[:, None], merged_c, nC[:, k - 1])
        nT[:, k - 1] = np.where(over[:, None], merged_t, nT[:, k - 1])
        node_d[p] = nD[:, :k]
        node_c[p] = nC[:, :k]
        node_t[p] = nT[:, :k]
    acc = np.zeros((npix, 3))
    vis = np.ones((npix, 3))
    for j in range(k):
        acc += node_c[:, j] * vis
        vis = vis * node_t[:, j]
    return acc + background * vis
