"""Acquisition operators: circular convolution with one or more
illumination kernels, per-pattern pixel masks, central restriction, the
exact adjoint, and BSNR-calibrated Gaussian noise.

With kernels ``h_i``, masks ``S_i`` and restriction ``R`` the noiseless
observation is ``R sum_i S_i (h_i * x)``.
"""
from dataclasses import dataclass, field
from functools import cached_property
import io
import json
import math

import numpy as np
from scipy import fft

from . import _fft
from ._validation import check_image, check_scalar, check_vector
from .grid import CenteredWindow, ImageGrid, IndexPartition, embed, restrict
from .optics import Kernel

__all__ = [
    "AcquisitionModel", "NoiseModel", "AcquisitionRecord", "kernel_spectrum",
    "convolve", "correlate", "forward", "adjoint", "calibrate_noise",
    "acquire", "save_record", "load_record",
]


def kernel_spectrum(h):
    """Real-FFT transfer function of a centered kernel."""
    img = h.image if isinstance(h, Kernel) else check_image(h, "kernel")
    return _fft.rfft2(fft.ifftshift(img))


def convolve(x, h):
    """Periodic convolution of ``x`` with the centered kernel ``h``."""
    x = check_image(x, "x")
    img = h.image if isinstance(h, Kernel) else check_image(h, "kernel")
    if img.shape != x.shape:
        raise ValueError(f"grid mismatch: image {x.shape}, kernel {img.shape}")
    return _fft.irfft2(_fft.rfft2(x) * kernel_spectrum(img), x.shape)


def correlate(x, h):
    """Periodic correlation with ``h``, the adjoint of :func:`convolve`."""
    x = check_image(x, "x")
    img = h.image if isinstance(h, Kernel) else check_image(h, "kernel")
    if img.shape != x.shape:
        raise ValueError(f"grid mismatch: image {x.shape}, kernel {img.shape}")
    return _fft.irfft2(_fft.rfft2(x) * np.conj(kernel_spectrum(img)), x.shape)


@dataclass(frozen=True, eq=False)
class AcquisitionModel:
    """Composite linear operator ``A = R sum_i S_i H_i``.

    Kernel spectra and the window-restricted masks are computed lazily and
    cached, so build one model and reuse it.
    """

    kernels: tuple
    partition: IndexPartition
    window: CenteredWindow

    def __post_init__(self):
        kernels = tuple(self.kernels)
        object.__setattr__(self, "kernels", kernels)
        if len(kernels) != self.partition.P:
            raise ValueError(f"{len(kernels)} kernels for a partition with P={self.partition.P}")
        shape = self.window.grid.shape
        for k in kernels:
            if k.image.shape != shape:
                raise ValueError(f"kernel shape {k.image.shape} does not match grid {shape}")
        if self.partition.N != self.window.grid.N:
            raise ValueError("partition size does not match the grid")

    @property
    def grid(self):
        return self.window.grid

    @property
    def P(self):
        return self.partition.P

    @property
    def M(self):
        return self.window.M

    @cached_property
    def spectra(self):
        return [kernel_spectrum(k) for k in self.kernels]

    @cached_property
    def _window_masks(self):
        # per-pattern masks cut to the window; None when the single mask is all ones
        if self.P == 1:
            return [None]
        sl = self.window.slices
        return [m[sl] for m in self.partition.masks(self.grid.shape)]

    def forward(self, x):
        """Noiseless observations of image ``x`` (length ``M`` vector)."""
        x = check_image(x, "x")
        if x.shape != self.grid.shape:
            raise ValueError(f"grid mismatch: image {x.shape}, model grid {self.grid.shape}")
        return self._forward(x)

    def _forward(self, x):
        X = _fft.rfft2(x)
        sl = self.window.slices
        out = None
        for H, m in zip(self.spectra, self._window_masks):
            c = _fft.irfft2(X * H, x.shape)[sl]
            if m is not None:
                c = np.where(m, c, 0.0)
            out = c if out is None else out + c
        return out.ravel()

    def adjoint(self, v):
        """Adjoint of :meth:`forward`: length-``M`` vector to image."""
        v = check_vector(v, self.M, "v")
        return self._adjoint(v)

    def _adjoint(self, v):
        shape = self.grid.shape
        sl = self.window.slices
        w = v.reshape(self.window.side, self.window.side)
        acc = None
        for H, m in zip(self.spectra, self._window_masks):
            e = np.zeros(shape)
            e[sl] = w if m is None else np.where(m, w, 0.0)
            term = _fft.rfft2(e) * np.conj(H)
            acc = term if acc is None else acc + term
        return _fft.irfft2(acc, shape)

    @cached_property
    def _full_masks(self):
        # window and pattern masks combined on the full grid, as floats
        shape = self.grid.shape
        sl = self.window.slices
        out = []
        for m in self._window_masks:
            full = np.zeros(shape)
            full[sl] = 1.0 if m is None else m
            out.append(full)
        return out

    @cached_property
    def _normal_parts(self):
        # spectra pre-divided by N so the unnormalized inverse FFT can be used
        n = self.grid.N
        if self.P == 1 and self.M == self.grid.N:
            # a single pattern seen in full: A^T A is diagonal in Fourier space
            return np.abs(self.spectra[0]) ** 2 / n, None
        fwd = [H / n for H in self.spectra]
        back = [np.conj(H) / n for H in self.spectra]
        return (fwd, back), self._full_masks

    def normal(self, x):
        """``A^T A x`` without validation (inner-loop use)."""
        return self._plain_normal(x)

    @cached_property
    def _plain_normal(self):
        return self.normal_operator()

    def normal_operator(self, shift=None):
        """Fast closure for ``v -> A^T A v + ifft(shift * fft(v))``.

        ``shift`` is an optional multiplier on the ``rfft2`` half spectrum,
        e.g. a periodic regularizer symbol; it costs no extra transforms.
        Inputs are not validated.
        """
        shape = self.grid.shape
        n = self.grid.N
        parts, masks = self._normal_parts
        extra = None if shift is None else np.asarray(shift, dtype=np.float64) / n
        if masks is None:
            symbol = parts if extra is None else parts + extra

            def apply(x):
                return _fft.irfft2_raw(_fft.rfft2_raw(x) * symbol, shape).copy()
            return apply

        fwd, back = parts

        def apply(x):
            X = _fft.rfft2_raw(x)
            products = [X * H for H in fwd]
            acc = X * extra if extra is not None else None
            for Y, Hb, m in zip(products, back, masks):
                c = _fft.irfft2_raw(Y, shape)
                np.multiply(c, m, out=c)
                if acc is None:
                    acc = _fft.rfft2_raw(c) * Hb
                else:
                    np.multiply(_fft.rfft2_raw(c), Hb, out=Y)
                    acc += Y
            return _fft.irfft2_raw(acc, shape).copy()
        return apply

    def describe(self):
        return {
            "width": self.grid.width,
            "height": self.grid.height,
            "P": self.P,
            "window_side": self.window.side,
            "requested_ratio": self.window.requested_ratio,
            "achieved_ratio": self.window.achieved_ratio,
            "kernel_kinds": [k.kind for k in self.kernels],
            "kernel_seeds": [k.seed for k in self.kernels],
            "partition_seed": self.partition.seed,
        }


def forward(x, model):
    return model.forward(x)


def adjoint(v, model):
    return model.adjoint(v)


@dataclass(frozen=True)
class NoiseModel:
    sigma: float
    bsnr_target: float
    seed: int | None = None

    def __post_init__(self):
        check_scalar(self.sigma, "sigma", low=0)


def calibrate_noise(y_clean, bsnr, seed=None):
    """Noise level giving an expected BSNR of ``bsnr`` dB on ``y_clean``.

    ``sigma = ||y_clean|| / (sqrt(M) 10^(bsnr/20))``; ``bsnr = inf`` gives
    ``sigma = 0``.
    """
    y_clean = check_vector(y_clean, name="y_clean")
    check_scalar(bsnr, "bsnr")
    norm = float(np.linalg.norm(y_clean))
    if norm == 0.0:
        raise ValueError("cannot calibrate noise on all-zero observations")
    if math.isinf(bsnr) and bsnr > 0:
        return NoiseModel(0.0, float(bsnr), seed)
    sigma = norm / (math.sqrt(y_clean.size) * 10.0 ** (bsnr / 20.0))
    return NoiseModel(sigma, float(bsnr), seed)


@dataclass(frozen=True, eq=False)
class AcquisitionRecord:
    y: np.ndarray
    model: AcquisitionModel
    noise: NoiseModel
    y_clean: np.ndarray = field(default=None)

    def __post_init__(self):
        y = check_vector(self.y, self.model.M, "y")
        object.__setattr__(self, "y", y)
        if self.y_clean is not None:
            object.__setattr__(self, "y_clean", check_vector(self.y_clean, self.model.M, "y_clean"))

    def window_image(self, clean=False):
        """Observations reshaped onto the square window."""
        v = self.y_clean if clean else self.y
        return v.reshape(self.model.window.side, self.model.window.side)


def acquire(x, model, bsnr, stream, seed=None):
    """Simulate noisy observations of ``x``.

    ``stream`` draws the Gaussian noise; ``bsnr=float('inf')`` means noiseless.
    """
    y_clean = model.forward(x)
    noise = calibrate_noise(y_clean, bsnr, seed)
    if noise.sigma > 0:
        y = y_clean + noise.sigma * stream.standard_normal(y_clean.size)
    else:
        y = y_clean.copy()
    return AcquisitionRecord(y, model, noise, y_clean)


# ---------------------------------------------------------------- file I/O
# One .npz container: "config" holds UTF-8 JSON; arrays are little-endian.

def save_record(record, path):
    model = record.model
    config = {
        "format": "lenscs-acquisition/1",
        "model": model.describe(),
        "noise": {"sigma": record.noise.sigma, "bsnr_target": record.noise.bsnr_target,
                  "seed": record.noise.seed},
    }
    payload = {
        "config": np.frombuffer(json.dumps(config, allow_nan=True).encode("utf-8"), dtype=np.uint8),
        "y": record.y.astype("<f8"),
        "kernels": np.stack([k.image for k in model.kernels]).astype("<f8"),
        "labels": model.partition.labels.astype("<i8"),
    }
    if record.y_clean is not None:
        payload["y_clean"] = record.y_clean.astype("<f8")
    buf = io.BytesIO()
    np.savez(buf, **payload)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_record(path):
    with np.load(path, allow_pickle=False) as data:
        config = json.loads(bytes(data["config"]).decode("utf-8"))
        m = config["model"]
        grid = ImageGrid(m["width"], m["height"])
        kernels = tuple(
            Kernel(img, kind, seed)
            for img, kind, seed in zip(data["kernels"], m["kernel_kinds"], m["kernel_seeds"])
        )
        partition = IndexPartition(data["labels"], m["P"], m["partition_seed"])
        window = CenteredWindow(grid, m["window_side"], m["requested_ratio"])
        model = AcquisitionModel(kernels, partition, window)
        n = config["noise"]
        noise = NoiseModel(n["sigma"], n["bsnr_target"], n["seed"])
        y_clean = data["y_clean"] if "y_clean" in data.files else None
        return AcquisitionRecord(np.array(data["y"]), model, noise,
                                 None if y_clean is None else np.array(y_clean))
