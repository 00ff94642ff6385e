"""64-bit perceptual image hash from the low-frequency DCT spectrum.

Pipeline: BT.601 grayscale, Lanczos resample to 32x32, 2-D DCT-II,
top-left 8x8 coefficient block, bit = coefficient > median, packed
row-major MSB-first. Robust to re-encoding; used for image dedup and
benchmark decontamination (always exact 64-bit equality, never radius).
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image
from scipy.fft import dct


class PhashError(ValueError):
    pass


def phash64(image: Image.Image) -> int:
    # PIL "L" mode is ITU-R 601-2 luma
    gray = image.convert("L").resize((32, 32), Image.Resampling.LANCZOS)
    pixels = np.asarray(gray, dtype=np.float64)
    coeffs = dct(dct(pixels, axis=0), axis=1)
    low = coeffs[:8, :8].flatten()
    median = np.median(low)
    value = 0
    for bit in low > median:
        value = (value << 1) | int(bit)
    return value


def phash64_bytes(data: bytes) -> int:
    try:
        with Image.open(io.BytesIO(data)) as img:
            img.load()
            return phash64(img)
    except Exception as exc:
        raise PhashError(f"undecodable image: {exc}") from exc


def hamming(a: int, b: int) -> int:
    return bin(a ^ b).count("1")
