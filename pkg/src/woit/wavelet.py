"""Haar approximation of per-pixel absorbance on normalized depth [0, 1).

A rank-N buffer stores 2**(N+1) coefficients per channel: slot 0 holds the
scaling coefficient, slot 2**n + k holds the level-n wavelet at offset k
(level-major layout, so the one coefficient a depth touches per level is an
index computation). Inserting an interface updates slot 0 plus one slot per
level, N + 2 slots total; reconstructing one staircase cell reads the same
count. Both paths are instrumented via ``TouchCounter`` so the bandwidth
claim is checkable rather than asserted.

Because every interface adds a nonnegative absorbance step, the scaling
coefficient stays nonnegative and every wavelet coefficient stays
nonpositive; packing exploits that by storing magnitudes only.

Evaluation reconstructs the staircase value at cell centers and linearly
interpolates between adjacent centers, clamping to the first/last center at
the ends. Interior queries therefore perform two cell reconstructions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

from .core import DepthBounds, Spectrum3

# Queries are clamped to 1 - 2**-24 so floor(2**n * z) never overflows the
# offset range at any supported rank.
EPS_Z = 2.0 ** -24

SpectrumLike = Union[Spectrum3, float, Sequence[float]]


def _as_channels(a: SpectrumLike) -> np.ndarray:
    if isinstance(a, Spectrum3):
        return a.as_array()
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(3, float(arr))
    if arr.shape != (3,):
        raise ValueError(f"expected scalar or 3 channels, got shape {arr.shape}")
    return arr.copy()


@dataclass
class TouchCounter:
    """Counts coefficient slots touched by inserts and staircase reconstructions."""

    inserts: int = 0
    insert_touches: int = 0
    evals: int = 0
    eval_touches: int = 0

    def record_insert(self, events: int, touched: int) -> None:
        self.inserts += events
        self.insert_touches += touched

    def record_eval(self, events: int, touched: int) -> None:
        self.evals += events
        self.eval_touches += touched

    @property
    def per_insert(self) -> float:
        return self.insert_touches / self.inserts if self.inserts else 0.0

    @property
    def per_eval(self) -> float:
        return self.eval_touches / self.evals if self.evals else 0.0


@dataclass
class WaveletBuffer:
    """Per-pixel, per-channel Haar coefficients of the absorbance function.

    ``coeffs`` has shape (2**(rank+1), 3). Mutable on purpose: inserts are
    commutative additive updates, so concurrent producers agree with any
    sequential order up to float reassociation.
    """

    rank: int
    coeffs: np.ndarray

    def __post_init__(self):
        if self.rank < 0:
            raise ValueError("rank must be >= 0")
        want = (1 << (self.rank + 1), 3)
        if self.coeffs.shape != want:
            raise ValueError(f"coeffs shape {self.coeffs.shape} != {want}")

    @classmethod
    def zeros(cls, rank: int) -> "WaveletBuffer":
        return cls(rank, np.zeros((1 << (rank + 1), 3), dtype=np.float64))

    @property
    def slots(self) -> int:
        return 1 << (self.rank + 1)

    def copy(self) -> "WaveletBuffer":
        return WaveletBuffer(self.rank, self.coeffs.copy())

    def sign_violations(self) -> int:
        """Slots violating scaling >= 0 / wavelet <= 0, for invariant checks."""
        bad = int(np.sum(self.coeffs[0] < 0.0))
        bad += int(np.sum(self.coeffs[1:] > 0.0))
        return bad


def slot_index(n: int, k: int) -> int:
    return (1 << n) + k


def normalize_depth(x: float, b: DepthBounds) -> float:
    """Map a world depth into [0, 1) over padded bounds.

    The bounds are padded symmetrically by max(1e-4 * range, 1e-6) so a
    degenerate single-fragment pixel maps to 0.5 and boundary fragments stay
    strictly inside the unit interval.
    """
    if b.is_empty:
        raise ValueError("no transparent coverage at pixel")
    rng = b.far - b.near
    pad = max(1e-4 * rng, 1e-6)
    z = (x - (b.near - pad)) / (rng + 2.0 * pad)
    return min(max(z, 0.0), 1.0 - EPS_Z)


def normalize_depth_array(x: np.ndarray, near: np.ndarray, far: np.ndarray) -> np.ndarray:
    """Vector form of ``normalize_depth`` over per-pixel bounds."""
    rng = far - near
    pad = np.maximum(1e-4 * rng, 1e-6)
    z = (x - (near - pad)) / (rng + 2.0 * pad)
    return np.clip(z, 0.0, 1.0 - EPS_Z)


def psi_integral(n: int, k: int, x: float) -> float:
    """Antiderivative of the level-n, offset-k Haar wavelet at x.

    A nonnegative triangular bump supported on [k/2**n, (k+1)/2**n] peaking
    at 2**(-n/2) / 2; sampling it at interface depths yields the wavelet
    coefficients.
    """
    if n < 0 or not (0 <= k < (1 << n)):
        raise ValueError(f"invalid wavelet index (n={n}, k={k})")
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"x must lie in [0, 1], got {x}")
    u = (1 << n) * x - k
    if u < 0.0 or u > 1.0:
        return 0.0
    return 2.0 ** (-0.5 * n) * (u if u < 0.5 else 1.0 - u)


def add_interface(buf: WaveletBuffer, z: float, a: SpectrumLike,
                  counter: TouchCounter | None = None) -> int:
    """Accumulate one absorbance step at normalized depth z into the buffer.

    Updates are additive and commute across calls, so insertion order does
    not matter. Returns the number of coefficient slots touched per channel
    (always rank + 2).
    """
    if not (0.0 <= z < 1.0):
        raise ValueError(f"z must lie in [0, 1), got {z}")
    ch = _as_channels(a)
    if np.any(ch < 0.0):
        raise ValueError("absorbance must be nonnegative")
    buf.coeffs[0] += ch * (1.0 - z)
    touched = 1
    for n in range(buf.rank + 1):
        k = min(int((1 << n) * z), (1 << n) - 1)
        buf.coeffs[slot_index(n, k)] -= ch * psi_integral(n, k, z)
        touched += 1
    if counter is not None:
        counter.record_insert(1, touched)
    return touched


def projection_oracle(interfaces: Iterable[Tuple[float, SpectrumLike]], rank: int,
                      samples: int = 1 << 16) -> WaveletBuffer:
    """Project the absorbance staircase onto the basis by midpoint quadrature.

    Brute-force alternative to the closed-form update, used to validate it:
    A(x) = sum_i a_i * theta(x - z_i) is sampled on a uniform midpoint grid
    and integrated against each basis function directly.
    """
    buf = WaveletBuffer.zeros(rank)
    pairs = [(float(z), _as_channels(a)) for z, a in interfaces]
    if not pairs:
        return buf
    for z, _ in pairs:
        if not (0.0 <= z < 1.0):
            raise ValueError(f"interface depth must lie in [0, 1), got {z}")

    grid = (np.arange(samples, dtype=np.float64) + 0.5) / samples
    # A at grid point j is the sum of steps left of it; accumulate each step
    # at the first grid index strictly past its depth and prefix-sum once.
    delta = np.zeros((samples + 1, 3), dtype=np.float64)
    zs = np.array([z for z, _ in pairs])
    chs = np.stack([ch for _, ch in pairs])
    np.add.at(delta, np.searchsorted(grid, zs, side="right"), chs)
    A = np.cumsum(delta[:samples], axis=0)

    # Prefix sums make every basis integral a pair of segment-sum lookups.
    prefix = np.zeros((samples + 1, 3), dtype=np.float64)
    np.cumsum(A, axis=0, out=prefix[1:])

    buf.coeffs[0] = prefix[samples] / samples
    for n in range(rank + 1):
        seg = samples >> n
        for k in range(1 << n):
            lo = k * seg
            mid = lo + seg // 2
            hi = lo + seg
            pos = prefix[mid] - prefix[lo]
            neg = prefix[hi] - prefix[mid]
            buf.coeffs[slot_index(n, k)] = 2.0 ** (0.5 * n) * (pos - neg) / samples
    return buf


def _cell_raw(buf: WaveletBuffer, cell: int, counter: TouchCounter | None) -> np.ndarray:
    """Staircase value at one cell center; touches rank + 2 slots per channel."""
    val = buf.coeffs[0].copy()
    touched = 1
    for n in range(buf.rank + 1):
        m = buf.rank + 1 - n
        k = cell >> m
        sign = -1.0 if (cell >> (m - 1)) & 1 else 1.0
        val += sign * 2.0 ** (0.5 * n) * buf.coeffs[slot_index(n, k)]
        touched += 1
    if counter is not None:
        counter.record_eval(1, touched)
    return val


def cell_values(buf: WaveletBuffer) -> np.ndarray:
    """Raw staircase reconstruction at all 2**(rank+1) cell centers, shape (M, 3)."""
    M = buf.slots
    return np.stack([_cell_raw(buf, c, None) for c in range(M)])


def evaluate_absorbance(buf: WaveletBuffer, z: float,
                        counter: TouchCounter | None = None) -> Spectrum3:
    """Reconstructed absorbance at normalized depth z, clamped to >= 0."""
    if not (0.0 <= z < 1.0 + EPS_Z):
        raise ValueError(f"z must lie in [0, 1), got {z}")
    M = buf.slots
    u = z * M - 0.5
    c0 = math.floor(u)
    if c0 < 0:
        val = _cell_raw(buf, 0, counter)
    elif c0 >= M - 1:
        val = _cell_raw(buf, M - 1, counter)
    else:
        t = u - c0
        val = (1.0 - t) * _cell_raw(buf, c0, counter) + t * _cell_raw(buf, c0 + 1, counter)
    return Spectrum3.from_array(np.maximum(val, 0.0))


def evaluate_visibility(buf: WaveletBuffer, z: float,
                        counter: TouchCounter | None = None) -> Spectrum3:
    """exp(-absorbance) at normalized depth z, per channel in (0, 1]."""
    a = evaluate_absorbance(buf, z, counter)
    return Spectrum3.from_array(np.exp(-a.as_array()))


# ---------------------------------------------------------------------------
# Batch kernels over flat per-pixel coefficient stacks, shape (pixels, slots, 3).
# Same math as the scalar ops above; scatter/gather sizes feed the counter so
# the per-insert and per-reconstruction touch counts stay measured quantities.

def build_into(coeffs: np.ndarray, pix: np.ndarray, z: np.ndarray, a: np.ndarray,
               rank: int, counter: TouchCounter | None = None) -> None:
    """Scatter-add a batch of interfaces (pixel, z, absorbance) into ``coeffs``."""
    if z.size == 0:
        return
    np.add.at(coeffs, (pix, 0), a * (1.0 - z)[:, None])
    touched = z.size
    for n in range(rank + 1):
        scale = 1 << n
        k = np.minimum((scale * z).astype(np.int64), scale - 1)
        u = scale * z - k
        psi = 2.0 ** (-0.5 * n) * np.minimum(u, 1.0 - u)
        np.add.at(coeffs, (pix, scale + k), -(a * psi[:, None]))
        touched += z.size
    if counter is not None:
        counter.record_insert(z.size, touched)


def cells_raw_batch(coeffs: np.ndarray, pix: np.ndarray, cells: np.ndarray,
                    rank: int, counter: TouchCounter | None = None) -> np.ndarray:
    """Staircase values at per-query cell indices, shape (queries, 3)."""
    val = coeffs[pix, 0, :].copy()
    touched = pix.size
    for n in range(rank + 1):
        m = rank + 1 - n
        k = cells >> m
        sign = 1.0 - 2.0 * ((cells >> (m - 1)) & 1)
        val += 2.0 ** (0.5 * n) * sign[:, None] * coeffs[pix, (1 << n) + k, :]
        touched += pix.size
    if counter is not None:
        counter.record_eval(pix.size, touched)
    return val


def interp_absorbance_batch(coeffs: np.ndarray, pix: np.ndarray, z: np.ndarray,
                            rank: int, counter: TouchCounter | None = None) -> np.ndarray:
    """Interpolated absorbance for a batch of (pixel, z) queries, clamped >= 0."""
    M = 1 << (rank + 1)
    u = z * M - 0.5
    c0 = np.floor(u).astype(np.int64)
    t = u - c0
    t = np.where((c0 < 0) | (c0 >= M - 1), 0.0, t)
    c0 = np.clip(c0, 0, M - 1)
    c1 = np.minimum(c0 + 1, M - 1)
    left = cells_raw_batch(coeffs, pix, c0, rank, counter)
    right = cells_raw_batch(coeffs, pix, c1, rank, counter)
    val = (1.0 - t)[:, None] * left + t[:, None] * right
    return np.maximum(val, 0.0)


def total_absorbance_batch(coeffs: np.ndarray, rank: int,
                           counter: TouchCounter | None = None) -> np.ndarray:
    """Absorbance at z -> 1 (last cell) for every pixel, shape (pixels, 3).

    At the last cell every level contributes its final wavelet with negative
    sign, which telescopes to the full sum of inserted absorbances whenever
    no interface lies strictly inside the last cell.
    """
    val = coeffs[:, 0, :].copy()
    touched = coeffs.shape[0]
    for n in range(rank + 1):
        val -= 2.0 ** (0.5 * n) * coeffs[:, (1 << (n + 1)) - 1, :]
        touched += coeffs.shape[0]
    if counter is not None:
        counter.record_eval(coeffs.shape[0], touched)
    return np.maximum(val, 0.0)
