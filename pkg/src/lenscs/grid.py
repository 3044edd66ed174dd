"""Pixel-grid primitives: grids, index partitions, centered windows and
the masking / restriction / embedding operators.

Images are 2-D float64 arrays of shape ``(height, width)``. Whenever a
pixel index is needed it is the row-major (C order), 0-based linear index
``row * width + col``; ``numpy.ravel`` uses the same convention.
"""
from dataclasses import dataclass, field
import hashlib
import math

import numpy as np

from ._validation import check_image, check_scalar, check_vector

#: Bit generator behind every :func:`make_stream`. PCG64 output for a given
#: seed is fixed by numpy's stream-compatibility policy on all platforms.
STREAM_ALGORITHM = "PCG64"


def make_stream(seed):
    """Return a reproducible random stream for a 64-bit integer seed."""
    seed = check_scalar(seed, "seed", low=0, integer=True)
    return np.random.Generator(np.random.PCG64(int(seed)))


def derive_seed(base, *keys):
    """Mix ``base`` with arbitrary hashable keys into a new 63-bit seed.

    Uses BLAKE2b on the ``repr`` of the keys, so the result does not depend
    on ``PYTHONHASHSEED`` or the platform.
    """
    digest = hashlib.blake2b(repr(keys).encode("utf-8"), digest_size=8).digest()
    return (int(base) ^ int.from_bytes(digest, "little")) & (2**63 - 1)


@dataclass(frozen=True)
class ImageGrid:
    width: int
    height: int

    def __post_init__(self):
        check_scalar(self.width, "width", low=1, integer=True)
        check_scalar(self.height, "height", low=1, integer=True)

    @property
    def N(self):
        return self.width * self.height

    @property
    def shape(self):
        return (self.height, self.width)

    @classmethod
    def square(cls, side):
        return cls(side, side)

    @classmethod
    def of(cls, image):
        """Grid of an existing ``(height, width)`` array."""
        h, w = np.shape(image)
        return cls(int(w), int(h))


@dataclass(frozen=True, eq=False)
class IndexPartition:
    """Disjoint cover of ``{0, ..., N-1}`` by ``P`` subsets.

    Stored as one label per pixel (``labels[j] == i`` iff ``j`` belongs to
    subset ``i``), which makes disjointness and coverage hold by
    construction.
    """

    labels: np.ndarray
    P: int
    seed: int | None = None

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.size == 0:
            raise ValueError("labels must be a non-empty 1-D array")
        check_scalar(self.P, "P", low=1, integer=True)
        if labels.min() < 0 or labels.max() >= self.P:
            raise ValueError("labels must lie in [0, P)")
        labels = labels.astype(np.int64, copy=True)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def N(self):
        return self.labels.size

    @property
    def subsets(self):
        """The index sets as a list of sorted int arrays."""
        return [np.flatnonzero(self.labels == i) for i in range(self.P)]

    def masks(self, shape):
        """Boolean images, one per subset, on a grid of the given shape."""
        if shape[0] * shape[1] != self.N:
            raise ValueError(f"partition covers {self.N} pixels, grid has {shape[0] * shape[1]}")
        lab = self.labels.reshape(shape)
        return np.stack([lab == i for i in range(self.P)])

    def __eq__(self, other):
        if not isinstance(other, IndexPartition):
            return NotImplemented
        return self.P == other.P and np.array_equal(self.labels, other.labels)

    __hash__ = None


def make_partition(N, P, stream, seed=None):
    """Assign every pixel independently and uniformly to one of ``P`` subsets.

    ``stream`` is a generator from :func:`make_stream`; ``seed`` is only
    recorded on the result for provenance.
    """
    check_scalar(N, "N", low=1, integer=True)
    check_scalar(P, "P", low=1, integer=True)
    if P > N:
        raise ValueError(f"P={P} exceeds N={N}")
    if P == 1:
        labels = np.zeros(N, dtype=np.int64)
    else:
        labels = stream.integers(0, P, size=N, dtype=np.int64)
    return IndexPartition(labels, P, seed)


@dataclass(frozen=True)
class CenteredWindow:
    """Square observation support of ``side**2`` pixels at the grid center."""

    grid: ImageGrid
    side: int
    requested_ratio: float = field(default=None, compare=False)

    def __post_init__(self):
        check_scalar(self.side, "side", low=1, integer=True)
        if self.side > min(self.grid.width, self.grid.height):
            raise ValueError(f"window side {self.side} exceeds the grid {self.grid.shape}")

    @property
    def M(self):
        return self.side * self.side

    @property
    def top_left(self):
        return ((self.grid.height - self.side) // 2, (self.grid.width - self.side) // 2)

    @property
    def achieved_ratio(self):
        return self.M / self.grid.N

    @property
    def slices(self):
        r0, c0 = self.top_left
        return (slice(r0, r0 + self.side), slice(c0, c0 + self.side))

    def mask(self):
        m = np.zeros(self.grid.shape, dtype=bool)
        m[self.slices] = True
        return m

    def indices(self):
        """Row-major linear indices of the window pixels, in output order."""
        return np.flatnonzero(self.mask())


def centered_window(grid, ratio):
    """Centered square window covering approximately ``ratio`` of the grid.

    The side is ``round(sqrt(ratio) * width)`` clamped to ``[1, width]``;
    the exact fraction ``M / N`` is available as ``achieved_ratio``.
    """
    check_scalar(ratio, "ratio", low=0, high=1, low_inclusive=False)
    side = int(round(math.sqrt(ratio) * grid.width))
    side = min(max(side, 1), grid.width, grid.height)
    return CenteredWindow(grid, side, float(ratio))


def apply_mask(u, indices):
    """Keep the pixels whose linear index is in ``indices``, zero the rest."""
    u = check_image(u, "u")
    idx = np.asarray(indices, dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= u.size):
        raise ValueError(f"mask index out of range for a grid of {u.size} pixels")
    out = np.zeros_like(u)
    out.flat[idx] = u.flat[idx]
    return out


def restrict(u, window):
    """Window pixels of ``u`` as a row-major vector of length ``window.M``."""
    u = check_image(u, "u")
    if u.shape != window.grid.shape:
        raise ValueError(f"grid mismatch: image {u.shape}, window grid {window.grid.shape}")
    return u[window.slices].ravel()


def embed(v, window):
    """Zero image with ``v`` written into the window (adjoint of :func:`restrict`)."""
    v = check_vector(v, window.M, "v")
    out = np.zeros(window.grid.shape)
    out[window.slices] = v.reshape(window.side, window.side)
    return out
