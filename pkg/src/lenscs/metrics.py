"""Signal-to-noise metrics in decibels.

``snr(estimate, truth) = 20 log10(||estimate|| / ||truth - estimate||)``;
note the estimate's norm in the numerator. Exact matches give ``+inf``.
"""
from dataclasses import dataclass
import math

import numpy as np

from ._validation import check_image, check_same_shape


def _db(num, den):
    if den == 0.0:
        return math.inf
    if num == 0.0:
        return -math.inf
    return 20.0 * math.log10(num / den)


def snr(estimate, truth):
    estimate = check_image(estimate, "estimate")
    truth = check_image(truth, "truth")
    check_same_shape(estimate, truth, ("estimate", "truth"))
    return _db(float(np.linalg.norm(estimate)), float(np.linalg.norm(truth - estimate)))


def window_snr(estimate, truth, window):
    """:func:`snr` restricted to the pixels of an observation window."""
    estimate = check_image(estimate, "estimate")
    truth = check_image(truth, "truth")
    check_same_shape(estimate, truth, ("estimate", "truth"))
    sl = window.slices
    return snr(estimate[sl], truth[sl])


def realized_bsnr(record):
    """BSNR actually achieved by a record's noise draw."""
    if record.y_clean is None:
        raise ValueError("record does not retain the noiseless observations")
    return _db(float(np.linalg.norm(record.y_clean)), float(np.linalg.norm(record.y - record.y_clean)))


@dataclass(frozen=True)
class SnrReport:
    full_fov_db: float
    window_db: float
    realized_bsnr_db: float


def snr_report(estimate, truth, record):
    return SnrReport(
        snr(estimate, truth),
        window_snr(estimate, truth, record.model.window),
        realized_bsnr(record),
    )
