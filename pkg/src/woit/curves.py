"""Visibility curves along one pixel's ray, for plots, tables and tests.

Every curve is sampled on the same normalized grid the wavelet pipeline
evaluates on, so ground truth and approximations are directly comparable
point by point. The truth column is the exact left-continuous visibility of
the fragment stream itself: the methods are judged on the scene they were
given, fog discretization included.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from . import baselines, wavelet
from .core import (DepthBounds, FragmentStream, TRANSMITTANCE_FLOOR,
                   exact_visibility, fragment_channel_absorbance, net_transmittance)
from .pipeline import eval_bounds

CHANNELS = {
    "luminance": np.array([0.2126, 0.7152, 0.0722]),
    "r": np.array([1.0, 0.0, 0.0]),
    "g": np.array([0.0, 1.0, 0.0]),
    "b": np.array([0.0, 0.0, 1.0]),
}

CURVE_METHODS = ("wavelet", "abuffer", "wboit", "mlab4")


@dataclass
class RayCurves:
    """Sampled visibility along one ray: shared grid, truth, per-method curves."""

    z: np.ndarray                 # normalized depth grid (midpoints)
    x: np.ndarray                 # corresponding world depths
    truth: np.ndarray             # channel-reduced exact visibility
    methods: Dict[str, np.ndarray]
    empty: bool = False


def _reduce(v: np.ndarray, channel: str) -> np.ndarray:
    try:
        w = CHANNELS[channel]
    except KeyError:
        raise ValueError(f"unknown channel {channel!r}; valid: {', '.join(CHANNELS)}") from None
    return v @ w


def wavelet_buffer_for_stream(fs: FragmentStream, rank: int,
                              cube_transmission: bool = False,
                              counter: Optional[wavelet.TouchCounter] = None
                              ) -> Tuple[wavelet.WaveletBuffer, DepthBounds]:
    """Build one pixel's coefficient stack the way the pipeline would."""
    depths = [f.depth for f in fs]
    near_e, far_e = eval_bounds(np.array([min(depths)]), np.array([max(depths)]), rank)
    bounds = DepthBounds(float(near_e[0]), float(far_e[0]))
    buf = wavelet.WaveletBuffer.zeros(rank)
    for f in fs:
        a = fragment_channel_absorbance(f, cube_transmission)
        wavelet.add_interface(buf, wavelet.normalize_depth(f.depth, bounds), a, counter)
    return buf, bounds


def extract_curves(fs: FragmentStream, methods: Iterable[str], rank: int,
                   samples: int = 512, channel: str = "luminance",
                   cube_transmission: bool = False) -> RayCurves:
    """Sample ground truth plus each requested method's visibility curve."""
    names = list(methods)
    for name in names:
        if name not in CURVE_METHODS:
            raise ValueError(f"unknown method {name!r}; valid: {', '.join(CURVE_METHODS)}")
    z = (np.arange(samples, dtype=np.float64) + 0.5) / samples
    if not fs:
        ones = np.ones(samples)
        return RayCurves(z, z.copy(), ones, {m: ones.copy() for m in names}, empty=True)

    buf, bounds = wavelet_buffer_for_stream(fs, rank, cube_transmission)
    # World depths corresponding to the grid, via the same padded mapping
    # normalize_depth applies.
    pad = max(1e-4 * (bounds.far - bounds.near), 1e-6)
    near_p, far_p = bounds.near - pad, bounds.far + pad
    x = near_p + z * (far_p - near_p)

    truth = _reduce(np.array([exact_visibility(fs, xi, cube_transmission).as_array()
                              for xi in x]), channel)
    out: Dict[str, np.ndarray] = {}
    for name in names:
        if name == "wavelet":
            v = np.array([wavelet.evaluate_visibility(buf, zi).as_array() for zi in z])
            out[name] = _reduce(v, channel)
        elif name == "abuffer":
            out[name] = truth.copy()
        elif name == "wboit":
            reveal = np.ones(3)
            for f in fs:
                reveal = reveal * net_transmittance(f, cube_transmission)
            a_tot = -np.log(np.maximum(TRANSMITTANCE_FLOOR, reveal))
            depths = [f.depth for f in fs]
            near, far = min(depths), max(depths)
            rng = far - near
            zr = np.clip((x - near) / rng, 0.0, 1.0) if rng > 0.0 else (x >= near) * 1.0
            out[name] = _reduce(np.exp(-np.outer(zr, a_tot)), channel)
        else:  # mlab4
            nodes = baselines.mlab_nodes(fs, 4, cube_transmission)
            v = np.ones((samples, 3))
            for n in nodes:
                v[x > n.depth] *= n.trans
            out[name] = _reduce(v, channel)
    return RayCurves(z, x, truth, out)
