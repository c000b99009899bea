"""Binary PPM (P6) image I/O with gamma 2.2 encoding of linear radiance."""

from __future__ import annotations

from pathlib import Path

import numpy as np

GAMMA = 2.2


def encode_u8(linear: np.ndarray) -> np.ndarray:
    """Linear radiance (H, W, 3) -> gamma-encoded uint8."""
    clamped = np.clip(linear, 0.0, 1.0)
    return np.round(255.0 * clamped ** (1.0 / GAMMA)).astype(np.uint8)


def decode_u8(u8: np.ndarray) -> np.ndarray:
    """Gamma-encoded uint8 -> linear radiance float."""
    return (u8.astype(np.float64) / 255.0) ** GAMMA


def write_ppm(path, linear: np.ndarray) -> None:
    img = encode_u8(linear)
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 file back as uint8 (H, W, 3)."""
    data = Path(path).read_bytes()
    fields = []
    i = 0
    # header = magic, width, height, maxval; '#' comments allowed between tokens
    while len(fields) < 4:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        fields.append(data[i:j])
        i = j
    if fields[0] != b"P6":
        raise ValueError(f"not a binary PPM: magic {fields[0]!r}")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"only maxval 255 supported, got {maxval}")
    i += 1  # single whitespace after maxval
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=i)
    return pixels.reshape(h, w, 3).copy()
