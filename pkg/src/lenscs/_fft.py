"""Real 2-D FFTs used by the hot loops.

Uses pyFFTW when it is importable and ``scipy.fft`` otherwise. FFTW plans
are made with ``FFTW_ESTIMATE`` on private aligned buffers, so the chosen
algorithm, and hence every output bit, is the same from run to run.
Set ``LENSCS_FFT=scipy`` to force the fallback.

The ``*_raw`` variants skip the output copy (and, for the inverse, the
``1/N`` normalization); their result is overwritten by the next call on
the same shape, so use it immediately.
"""
import os
import threading

from scipy import fft as _sfft

try:
    if os.environ.get("LENSCS_FFT", "").lower() == "scipy":
        raise ImportError
    import pyfftw
except ImportError:
    pyfftw = None

BACKEND = "pyfftw" if pyfftw is not None else "scipy"

_local = threading.local()


def _plans(shape):
    cache = getattr(_local, "plans", None)
    if cache is None:
        cache = _local.plans = {}
    plans = cache.get(shape)
    if plans is None:
        h, w = shape
        r_in = pyfftw.empty_aligned((h, w), dtype="float64")
        c_out = pyfftw.empty_aligned((h, w // 2 + 1), dtype="complex128")
        c_in = pyfftw.empty_aligned((h, w // 2 + 1), dtype="complex128")
        r_out = pyfftw.empty_aligned((h, w), dtype="float64")
        flags = ("FFTW_ESTIMATE", "FFTW_DESTROY_INPUT")
        fwd = pyfftw.FFTW(r_in, c_out, axes=(0, 1), direction="FFTW_FORWARD",
                          flags=flags, threads=1)
        inv = pyfftw.FFTW(c_in, r_out, axes=(0, 1), direction="FFTW_BACKWARD",
                          flags=flags, threads=1)
        plans = cache[shape] = (r_in, c_out, fwd, c_in, r_out, inv)
    return plans


def rfft2_raw(x):
    if pyfftw is None:
        return _sfft.rfft2(x)
    r_in, c_out, fwd, _, _, _ = _plans(x.shape)
    r_in[...] = x
    fwd.execute()
    return c_out


def irfft2_raw(X, shape):
    """Unnormalized inverse: ``N`` times :func:`irfft2`."""
    if pyfftw is None:
        return _sfft.irfft2(X, s=shape, norm="forward")
    _, _, _, c_in, r_out, inv = _plans(tuple(shape))
    c_in[...] = X
    inv.execute()
    return r_out


def rfft2(x):
    """Real-to-half-complex 2-D FFT of a 2-D float array."""
    out = rfft2_raw(x)
    return out.copy() if pyfftw is not None else out


def irfft2(X, shape):
    """Inverse of :func:`rfft2` for an output of the given shape."""
    if pyfftw is None:
        return _sfft.irfft2(X, s=shape)
    out = irfft2_raw(X, shape)
    return out * (1.0 / out.size)
