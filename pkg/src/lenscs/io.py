"""Grayscale image read/write (PGM/PNG and anything Pillow understands)."""
import numpy as np
from PIL import Image


def save_grayscale(image, path, vmin=None, vmax=None, bits=8):
    """Linearly map ``[vmin, vmax]`` to the full integer range and save.

    Defaults map the image's own min/max. ``bits`` is 8 or 16; 16-bit
    output is written as a binary PGM/PNG with ``I;16`` pixels.
    """
    a = np.asarray(image, dtype=np.float64)
    lo = a.min() if vmin is None else vmin
    hi = a.max() if vmax is None else vmax
    scale = (a - lo) / (hi - lo) if hi > lo else np.zeros_like(a)
    scale = np.clip(scale, 0.0, 1.0)
    if bits == 8:
        img = Image.fromarray(np.round(scale * 255).astype(np.uint8))
    elif bits == 16:
        img = Image.fromarray(np.round(scale * 65535).astype(np.uint16))
    else:
        raise ValueError("bits must be 8 or 16")
    img.save(path)


def load_grayscale(path):
    """Load an image as float64 rescaled linearly to ``[0, 1]``.

    Color images are converted to luminance first.
    """
    with Image.open(path) as img:
        if img.mode not in ("L", "I", "I;16", "F"):
            img = img.convert("L")
        a = np.asarray(img, dtype=np.float64)
    lo, hi = a.min(), a.max()
    if hi <= lo:
        raise ValueError(f"{path} is a constant image")
    return (a - lo) / (hi - lo)
