"""Quantitative comparison of visibility curves and rendered images."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import VisibilityCurve

PSNR_IDENTICAL = math.inf  # sentinel for a zero-RMSE comparison


@dataclass(frozen=True)
class CurveError:
    l1: float
    l2: float
    linf: float
    samples: int


def curve_error(approx: VisibilityCurve, truth: VisibilityCurve) -> CurveError:
    """Mean absolute, RMS, and max deviation between curves on a shared grid."""
    if approx.z.shape != truth.z.shape or not np.array_equal(approx.z, truth.z):
        raise ValueError("curves must be sampled on the same z grid")
    d = np.abs(approx.v - truth.v)
    return CurveError(float(d.mean()), float(np.sqrt((d * d).mean())), float(d.max()), d.size)


def image_rmse(a: np.ndarray, b: np.ndarray) -> float:
    """Root mean square error over all pixels and channels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.sqrt(np.mean(d * d)))


def image_psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB for unit-range images; infinite for identical inputs."""
    rmse = image_rmse(a, b)
    if rmse == 0.0:
        return PSNR_IDENTICAL
    return 20.0 * math.log10(1.0 / rmse)
