"""Wavelet order-independent transparency, CPU reference implementation."""

from .core import (
    DepthBounds,
    Fragment,
    FragmentStream,
    Spectrum3,
    VisibilityCurve,
    exact_visibility,
    fragment_channel_absorbance,
)
from .wavelet import (
    TouchCounter,
    WaveletBuffer,
    add_interface,
    evaluate_absorbance,
    evaluate_visibility,
    normalize_depth,
    projection_oracle,
    psi_integral,
)
from .packing import pack_rgb9e5, unpack_rgb9e5, pack_buffer, unpack_buffer

__version__ = "0.1.0"
