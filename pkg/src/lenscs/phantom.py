"""Synthetic tissue-like ground truth."""
import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.special import expit

from .grid import ImageGrid


def make_phantom(grid, stream):
    """Piecewise-smooth, non-negative phantom in ``[0, 1]``.

    Sum of 20 to 40 soft-edged ellipses of random size, orientation and
    brightness, plus a few faint thin filaments.
    """
    h, w = grid.shape
    scale = min(h, w)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.zeros((h, w))

    n_blobs = int(stream.integers(20, 41))
    for _ in range(n_blobs):
        cy, cx = stream.uniform(0, h), stream.uniform(0, w)
        a, b = stream.uniform(0.03, 0.15, size=2) * scale
        theta = stream.uniform(0, np.pi)
        amp = stream.uniform(0.3, 1.0)
        soft = stream.uniform(0.5, 1.5)  # edge width in pixels
        c, s = np.cos(theta), np.sin(theta)
        u = (xx - cx) * c + (yy - cy) * s
        v = -(xx - cx) * s + (yy - cy) * c
        r = np.sqrt((u / a) ** 2 + (v / b) ** 2)
        # signed distance to the edge, approximately in pixels
        img += amp * expit((1.0 - r) * min(a, b) / soft)

    lines = np.zeros((h, w))
    n_fil = int(stream.integers(3, 9))
    for _ in range(n_fil):
        py, px = stream.uniform(0, h), stream.uniform(0, w)
        heading = stream.uniform(0, 2 * np.pi)
        amp = stream.uniform(0.15, 0.3)
        for _ in range(int(stream.integers(scale // 2, 2 * scale))):
            heading += stream.normal(0.0, 0.15)
            py += 0.5 * np.sin(heading)
            px += 0.5 * np.cos(heading)
            iy, ix = int(round(py)), int(round(px))
            if 0 <= iy < h and 0 <= ix < w:
                lines[iy, ix] = max(lines[iy, ix], amp)
    lines = gaussian_filter(lines, 0.7)
    if lines.max() > 0:
        img += lines * (img.max() * 0.25 / lines.max())

    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo)


def default_phantom(size=128, seed=0):
    from .grid import make_stream

    return make_phantom(ImageGrid.square(size), make_stream(seed))
