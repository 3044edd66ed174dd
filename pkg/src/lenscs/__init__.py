"""Lensless-endoscope acquisition simulation (focused raster scan and
compressive random speckles) and TV/ADMM image reconstruction."""
from .exceptions import NumericalFailure, OperatorContractError
from .forward import (AcquisitionModel, AcquisitionRecord, NoiseModel, acquire, adjoint,
                      calibrate_noise, convolve, forward, load_record, save_record)
from .grid import (CenteredWindow, ImageGrid, IndexPartition, apply_mask, centered_window,
                   derive_seed, embed, make_partition, make_stream, restrict)
from .metrics import SnrReport, realized_bsnr, snr, snr_report, window_snr
from .optics import Kernel, PupilModel, correct_vignetting, focused_psf, speckle_psf
from .phantom import make_phantom
from .tv import (SolverConfig, SolverState, admm_reconstruct, cg_solve, divergence,
                 gradient, group_soft_threshold, objective, select_rho, tv_norm,
                 whiteness_score)

__version__ = "0.1.0"
