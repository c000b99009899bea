"""Shared-exponent E5B9G9R9 packing of coefficient triples.

Word layout (bit 0 = LSB):

    bits  0-8    red mantissa    (9 bits)
    bits  9-17   green mantissa  (9 bits)
    bits 18-26   blue mantissa   (9 bits)
    bits 27-31   shared exponent (5 bits, bias 15)

    value_c = mantissa_c * 2**(exponent - 15 - 9)

The largest representable value is (511/512) * 2**16 = 65408; inputs above
it clamp to it, NaN raises. The roundtrip error of any component is at most
2**-9 of the largest component in the triple.

Signs are implicit when a wavelet pixel is packed: slot 0 stores the
nonnegative scaling coefficient, every other slot stores a wavelet
coefficient magnitude that unpacks with a fixed negative sign. This layout
is the storage interface a port to another backend must reproduce bit for
bit.
"""

from __future__ import annotations

import numpy as np

from .wavelet import WaveletBuffer

MANTISSA_BITS = 9
EXPONENT_BITS = 5
EXPONENT_BIAS = 15
_MANT_MAX = (1 << MANTISSA_BITS) - 1
_EXP_MAX = (1 << EXPONENT_BITS) - 1

# (511/512) * 2**16
MAX_VALUE = float(_MANT_MAX) / (1 << MANTISSA_BITS) * 2.0 ** (_EXP_MAX - EXPONENT_BIAS)

BYTES_PER_WORD = 4


def bytes_per_pixel(rank: int) -> int:
    """Packed storage for one pixel: one word per coefficient slot."""
    return BYTES_PER_WORD * (1 << (rank + 1))


def pack_rgb9e5(values) -> np.ndarray | np.uint32:
    """Pack nonnegative triples (..., 3) into shared-exponent words.

    Accepts a single triple or any array whose last axis has length 3;
    returns a matching uint32 scalar or array.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.shape[-1:] != (3,):
        raise ValueError(f"expected triples on the last axis, got shape {v.shape}")
    if np.any(np.isnan(v)):
        raise ValueError("cannot pack NaN")
    scalar = v.ndim == 1
    v = np.clip(v, 0.0, MAX_VALUE)

    maxc = v.max(axis=-1)
    with np.errstate(divide="ignore"):
        floor_log = np.floor(np.log2(maxc, where=maxc > 0.0, out=np.full_like(maxc, -np.inf)))
    exp = np.maximum(-EXPONENT_BIAS - 1.0, floor_log) + 1.0 + EXPONENT_BIAS
    exp = np.maximum(exp, 0.0)
    scale = np.exp2(exp - EXPONENT_BIAS - MANTISSA_BITS)
    # A max component that rounds up to 2**9 needs one more exponent step.
    bump = np.floor(maxc / scale + 0.5) >= (1 << MANTISSA_BITS)
    exp = exp + bump
    scale = np.where(bump, scale * 2.0, scale)

    mant = np.floor(v / scale[..., None] + 0.5).astype(np.uint32)
    mant = np.minimum(mant, _MANT_MAX)
    word = (mant[..., 0] | (mant[..., 1] << 9) | (mant[..., 2] << 18)
            | (exp.astype(np.uint32) << 27)).astype(np.uint32)
    return word[()] if scalar else word


def unpack_rgb9e5(words) -> np.ndarray:
    """Inverse of ``pack_rgb9e5``: words -> float triples (..., 3)."""
    w = np.asarray(words, dtype=np.uint64)
    exp = (w >> 27) & _EXP_MAX
    scale = np.exp2(exp.astype(np.float64) - EXPONENT_BIAS - MANTISSA_BITS)
    out = np.empty(w.shape + (3,), dtype=np.float64)
    out[..., 0] = (w & _MANT_MAX).astype(np.float64)
    out[..., 1] = ((w >> 9) & _MANT_MAX).astype(np.float64)
    out[..., 2] = ((w >> 18) & _MANT_MAX).astype(np.float64)
    out *= scale[..., None]
    return out


def pack_buffer(buf: WaveletBuffer) -> np.ndarray:
    """Pack one pixel's coefficient stack into 2**(rank+1) words.

    Word j holds the channel magnitudes of slot j; the sign convention above
    makes a sign bit unnecessary.
    """
    return pack_rgb9e5(np.abs(buf.coeffs))


def unpack_buffer(words: np.ndarray, rank: int) -> WaveletBuffer:
    """Rebuild a coefficient stack from packed words, restoring implicit signs."""
    coeffs = unpack_rgb9e5(words)
    coeffs[1:] = -coeffs[1:]
    return WaveletBuffer(rank, coeffs)


def roundtrip_coeff_array(coeffs: np.ndarray) -> np.ndarray:
    """Pack/unpack a (pixels, slots, 3) coefficient array in place of exact storage."""
    out = unpack_rgb9e5(pack_rgb9e5(np.abs(coeffs)))
    out[:, 1:, :] = -out[:, 1:, :]
    return out
