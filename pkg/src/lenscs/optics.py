"""Illumination kernels from a scalar Fourier-optics pupil model.

A focused spot is the intensity of the inverse Fourier transform of a
uniform circular pupil; a speckle is the same pupil with i.i.d. uniform
random phases. Kernels span the whole grid and are stored centered, i.e.
the zero-shift tap is pixel ``(height // 2, width // 2)``.
"""
from dataclasses import dataclass
import struct

import numpy as np
from scipy import fft
from scipy.ndimage import gaussian_filter

from ._validation import check_image, check_scalar
from .grid import ImageGrid

KINDS = ("focused", "speckle")

# raw kernel files: <i8 width, <i8 height, <i8 kind code, then <f8 row-major
_RAW_HEADER = struct.Struct("<qqq")


@dataclass(frozen=True)
class PupilModel:
    grid: ImageGrid
    pupil_radius: float = 0.15  # cycles per pixel; 0.5 is the Nyquist limit

    def __post_init__(self):
        check_scalar(self.pupil_radius, "pupil_radius", low=0, high=0.5, low_inclusive=False)

    def aperture(self):
        """Boolean circular aperture on the unshifted FFT frequency grid."""
        fy = fft.fftfreq(self.grid.height)[:, None]
        fx = fft.fftfreq(self.grid.width)[None, :]
        return fx**2 + fy**2 <= self.pupil_radius**2


@dataclass(frozen=True, eq=False)
class Kernel:
    image: np.ndarray
    kind: str
    seed: int | None = None

    def __post_init__(self):
        img = check_image(self.image, "kernel").copy()
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if (self.kind == "speckle") != (self.seed is not None):
            raise ValueError("a seed is required for speckle kernels and forbidden otherwise")
        if np.any(img < 0) or not np.all(np.isfinite(img)):
            raise ValueError("kernel values must be finite and non-negative")
        total = img.sum()
        if total <= 0:
            raise ValueError("kernel has zero total energy")
        img /= total
        img.setflags(write=False)
        object.__setattr__(self, "image", img)

    @property
    def grid(self):
        return ImageGrid.of(self.image)

    @classmethod
    def delta(cls, grid):
        """Identity kernel: a unit tap at the grid center."""
        img = np.zeros(grid.shape)
        img[grid.height // 2, grid.width // 2] = 1.0
        return cls(img, "focused")


def _intensity(field_pupil):
    psf = np.abs(fft.ifft2(field_pupil)) ** 2
    return fft.fftshift(psf)


def focused_psf(pupil):
    """Diffraction-limited focal spot of a zero-phase circular pupil."""
    return Kernel(_intensity(pupil.aperture().astype(np.complex128)), "focused")


def speckle_psf(pupil, stream, seed=None, vignetting=True):
    """Fully developed speckle: circular pupil with random phases.

    ``stream`` supplies the phases; ``seed`` is recorded on the kernel (it
    defaults to ``-1`` meaning "unknown" so a stream alone still works).
    """
    ap = pupil.aperture()
    phases = stream.uniform(0.0, 2.0 * np.pi, size=ap.shape)
    field_pupil = np.where(ap, np.exp(1j * phases), 0.0)
    k = Kernel(_intensity(field_pupil), "speckle", -1 if seed is None else int(seed))
    if vignetting:
        k = correct_vignetting(k)
    return k


def correct_vignetting(kernel, sigma=None, floor=1e-6):
    """Flatten the slowly varying envelope of an illumination pattern.

    The envelope is estimated by a Gaussian blur of the pattern (standard
    deviation ``width / 4`` by default) and floored at ``floor`` times its
    maximum before dividing.
    """
    img = np.asarray(kernel.image if isinstance(kernel, Kernel) else kernel, dtype=np.float64)
    img = check_image(img, "kernel")
    if np.any(img < 0):
        raise ValueError("pattern must be non-negative")
    if not np.any(img > 0):
        raise ValueError("cannot correct an all-zero pattern")
    if sigma is None:
        sigma = img.shape[1] / 4.0
    envelope = gaussian_filter(img, sigma=sigma, mode="reflect")
    envelope = np.maximum(envelope, floor * envelope.max())
    out = np.maximum(img / envelope, 0.0)
    if isinstance(kernel, Kernel):
        return Kernel(out, kernel.kind, kernel.seed)
    return out / out.sum()


def fwhm(profile):
    """Full width at half maximum of a 1-D single-peaked profile, in samples.

    Linear interpolation between the samples bracketing the half level.
    """
    p = np.asarray(profile, dtype=np.float64)
    k = int(np.argmax(p))
    half = p[k] / 2.0
    left = k
    while left > 0 and p[left - 1] > half:
        left -= 1
    right = k
    while right < p.size - 1 and p[right + 1] > half:
        right += 1
    if left == 0 or right == p.size - 1:
        raise ValueError("profile does not fall below half maximum on both sides")
    xl = left - (p[left] - half) / (p[left] - p[left - 1])
    xr = right + (p[right] - half) / (p[right] - p[right + 1])
    return xr - xl


# ---------------------------------------------------------------- file I/O

def save_kernel_raw(kernel, path):
    img = np.ascontiguousarray(kernel.image, dtype="<f8")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(_RAW_HEADER.pack(w, h, KINDS.index(kernel.kind)))
        fh.write(img.tobytes(order="C"))


def load_kernel_raw(path, seed=None):
    with open(path, "rb") as fh:
        w, h, code = _RAW_HEADER.unpack(fh.read(_RAW_HEADER.size))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if code not in (0, 1):
        raise ValueError(f"unknown kernel kind code {code} in {path}")
    if data.size != w * h:
        raise ValueError(f"{path}: header says {w}x{h}, payload has {data.size} values")
    kind = KINDS[code]
    if kind == "speckle" and seed is None:
        seed = -1
    return Kernel(data.reshape(h, w).astype(np.float64), kind, seed if kind == "speckle" else None)


def save_kernel_image(kernel, path):
    """Write a kernel as an 8-bit grayscale image scaled to its maximum."""
    from .io import save_grayscale

    save_grayscale(kernel.image, path, vmin=0.0)
