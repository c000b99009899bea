"""Shared domain types and the exact per-ray compositing math.

Transparency is handled per color channel: a fragment multiplies the light
arriving from behind it by a net transmittance

    t_c = 1 - alpha * (1 - T_c)

where T_c is the material transmission color and alpha the coverage.
Visibility along a ray is the running product of those factors; absorbance
(-log visibility) is the additive form everything downstream approximates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

# Floor applied to per-fragment net transmittance so absorbance stays finite
# even for fully opaque fragments.
TRANSMITTANCE_FLOOR = 1e-6

_NORMAL_TOL = 1e-6


@dataclass(frozen=True)
class Spectrum3:
    """RGB triple holding radiance or per-channel transmittance."""

    r: float
    g: float
    b: float

    def __post_init__(self):
        for c in (self.r, self.g, self.b):
            if not math.isfinite(c):
                raise ValueError(f"non-finite spectrum component in {(self.r, self.g, self.b)}")

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.g, self.b], dtype=np.float64)

    @classmethod
    def from_array(cls, a: Sequence[float]) -> "Spectrum3":
        r, g, b = a
        return cls(float(r), float(g), float(b))

    @classmethod
    def gray(cls, v: float) -> "Spectrum3":
        return cls(v, v, v)

    def luminance(self) -> float:
        return 0.2126 * self.r + 0.7152 * self.g + 0.0722 * self.b

    def __iter__(self):
        yield self.r
        yield self.g
        yield self.b


@dataclass(frozen=True)
class Fragment:
    """One transparent surface sample on a view ray.

    ``radiance`` is premultiplied shading (incoming light times reflectance);
    the compositor additionally weights it by ``alpha``. ``transmission``
    tints whatever lies behind the fragment. ``depth`` is world units along
    the ray. ``backface`` marks exit interfaces (e.g. the rear wall of a
    sphere); it only matters to optional shading heuristics.
    """

    depth: float
    alpha: float
    transmission: Spectrum3
    radiance: Spectrum3
    normal: Tuple[float, float, float] = (0.0, 0.0, -1.0)
    ior: float = 1.0
    backface: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.depth) and self.depth > 0.0):
            raise ValueError(f"fragment depth must be positive and finite, got {self.depth}")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"fragment alpha must lie in [0, 1], got {self.alpha}")
        for c in self.transmission:
            if not (0.0 <= c <= 1.0):
                raise ValueError(f"transmission must lie in [0, 1]^3, got {tuple(self.transmission)}")
        for c in self.radiance:
            if c < 0.0:
                raise ValueError(f"radiance must be nonnegative, got {tuple(self.radiance)}")
        if self.ior < 1.0:
            raise ValueError(f"ior must be >= 1, got {self.ior}")
        n = tuple(float(c) for c in self.normal)
        object.__setattr__(self, "normal", n)
        norm = math.sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2])
        if abs(norm - 1.0) > _NORMAL_TOL:
            raise ValueError(f"normal must be unit length, |n| = {norm}")


# One pixel's unordered fragment list. No ordering guarantee: order
# independence of everything built on top is the point.
FragmentStream = List[Fragment]


@dataclass(frozen=True)
class DepthBounds:
    """Per-pixel [near, far] range of transparent fragment depths.

    The empty state (pixel with no transparent coverage) is encoded
    explicitly as near=+inf, far=-inf, which is also the identity for
    ``expanded``.
    """

    near: float = math.inf
    far: float = -math.inf

    def __post_init__(self):
        if math.isnan(self.near) or math.isnan(self.far):
            raise ValueError("depth bounds may not be NaN")
        if self.near <= self.far and not (math.isfinite(self.near) and math.isfinite(self.far)):
            raise ValueError("non-empty depth bounds must be finite")

    @classmethod
    def empty(cls) -> "DepthBounds":
        return cls()

    @property
    def is_empty(self) -> bool:
        return self.near > self.far

    def expanded(self, depth: float) -> "DepthBounds":
        return DepthBounds(min(self.near, depth), max(self.far, depth))

    @classmethod
    def of_stream(cls, fs: FragmentStream) -> "DepthBounds":
        b = cls.empty()
        for f in fs:
            b = b.expanded(f.depth)
        return b


@dataclass(frozen=True)
class VisibilityCurve:
    """Sampled visibility v(z) over normalized depth, used by oracles and metrics."""

    z: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if z.shape != v.shape or z.ndim != 1:
            raise ValueError("curve z and v must be 1-d arrays of equal length")
        if np.any(np.diff(z) <= 0.0):
            raise ValueError("curve z samples must be strictly increasing")
        if np.any(v < -1e-9) or np.any(v > 1.0 + 1e-9):
            raise ValueError("curve v samples must lie in [0, 1]")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "v", v)

    @property
    def samples(self) -> List[Tuple[float, float]]:
        return list(zip(self.z.tolist(), self.v.tolist()))


def net_transmittance(f: Fragment, cube_transmission: bool = False,
                      cube_backface_only: bool = False) -> np.ndarray:
    """Per-channel net transmittance of one fragment.

    With ``cube_transmission`` on, the transmission color of refractive
    fragments (ior > 1) is cubed before coverage is applied, darkening
    surfaces as if light had been extinguished inside the medium. The
    ``cube_backface_only`` variant restricts that to exit interfaces.
    """
    T = f.transmission.as_array()
    if cube_transmission and f.ior > 1.0 and (f.backface or not cube_backface_only):
        T = T * T * T
    return 1.0 - f.alpha * (1.0 - T)


def fragment_channel_absorbance(f: Fragment, cube_transmission: bool = False,
                                cube_backface_only: bool = False) -> Spectrum3:
    """Nonnegative per-channel absorbance -ln(t) contributed by one fragment."""
    t = net_transmittance(f, cube_transmission, cube_backface_only)
    a = -np.log(np.maximum(TRANSMITTANCE_FLOOR, t))
    return Spectrum3.from_array(a)


def sorted_stream(fs: FragmentStream) -> FragmentStream:
    """Canonical depth order with insertion index as the tie-break."""
    return [f for _, f in sorted(enumerate(fs), key=lambda p: (p[1].depth, p[0]))]


def exact_visibility(fs: FragmentStream, x: float, cube_transmission: bool = False,
                     cube_backface_only: bool = False) -> Spectrum3:
    """Exact net transmittance from depth x back to the ray origin.

    Fragments exactly at depth x are excluded (left-continuous steps), so a
    surface never attenuates itself. The product is taken in canonical depth
    order, making the oracle invariant under stream permutation.
    """
    if x < 0.0:
        raise ValueError("query depth must be nonnegative")
    v = np.ones(3, dtype=np.float64)
    for f in sorted_stream(fs):
        if f.depth < x:
            v = v * net_transmittance(f, cube_transmission, cube_backface_only)
    return Spectrum3.from_array(v)
