"""Isotropic total-variation reconstruction by ADMM.

Solves ``min_x ||A x - y||^2 + rho * TV(x)`` with the splitting ``z = D x``
(``D`` = forward-difference gradient, replicate boundary). The quadratic
``x`` step is solved by conjugate gradients because the masks and the
restriction make ``A^T A`` non-diagonal in the Fourier basis. ``rho`` is
chosen on a grid by maximizing the whiteness of the data residual.

Gradient fields are arrays of shape ``(2, height, width)`` holding the
horizontal (``[0]``) and vertical (``[1]``) differences.
"""
from dataclasses import dataclass, field
import csv
import logging
import math

import numpy as np
from scipy.linalg.blas import daxpy as _axpy, dnrm2 as _nrm2

from . import _fft
from ._validation import check_image, check_scalar, check_vector
from .exceptions import NumericalFailure, OperatorContractError

logger = logging.getLogger(__name__)


def gradient(u):
    """Forward differences; the last column of ``gx`` and last row of ``gy`` are 0."""
    u = check_image(u, "u")
    g = np.zeros((2,) + u.shape)
    g[0, :, :-1] = u[:, 1:] - u[:, :-1]
    g[1, :-1, :] = u[1:, :] - u[:-1, :]
    return g


def divergence(g):
    """Negative adjoint of :func:`gradient`.

    Values in the last column of ``g[0]`` and last row of ``g[1]`` are
    ignored, matching the zeros that :func:`gradient` writes there.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 3 or g.shape[0] != 2:
        raise ValueError(f"gradient field must have shape (2, h, w), got {g.shape}")
    gx, gy = g
    h, w = gx.shape
    div = np.zeros((h, w))
    if w > 1:
        div[:, :-1] += gx[:, :-1]
        div[:, 1:] -= gx[:, :-1]
    if h > 1:
        div[:-1, :] += gy[:-1, :]
        div[1:, :] -= gy[:-1, :]
    return div


def laplacian(u):
    """``divergence(gradient(u))`` in one pass (5-point stencil, replicate boundary)."""
    u = np.asarray(u, dtype=np.float64)
    out = np.empty_like(u)
    dx = u[:, 1:] - u[:, :-1]
    out[:, :-1] = dx
    out[:, -1] = 0.0
    out[:, 1:] -= dx
    dy = u[1:, :] - u[:-1, :]
    out[:-1, :] += dy
    out[1:, :] -= dy
    return out


def periodic_laplacian_symbol(shape):
    """Eigenvalues of ``-laplacian`` with periodic boundaries on the rfft2 half grid."""
    h, w = shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.rfftfreq(w)[None, :]
    return 4 * np.sin(np.pi * fx) ** 2 + 4 * np.sin(np.pi * fy) ** 2


def _replicate_correction(out, u, scale):
    """Add ``scale * (laplacian(u) - periodic laplacian(u))`` to ``out`` in place.

    The two stencils only differ on the border rows and columns.
    """
    cy = scale * (u[0, :] - u[-1, :])
    out[0, :] += cy
    out[-1, :] -= cy
    cx = scale * (u[:, 0] - u[:, -1])
    out[:, 0] += cx
    out[:, -1] -= cx
    return out


def tv_norm(u):
    """Isotropic TV: sum over pixels of the gradient magnitude."""
    g = gradient(u)
    return float(np.sum(np.hypot(g[0], g[1])))


def group_soft_threshold(g, tau):
    """Shrink each pixel's gradient vector toward 0 by ``tau`` in magnitude."""
    check_scalar(tau, "tau", low=0)
    g = np.asarray(g, dtype=np.float64)
    mag = np.hypot(g[0], g[1])
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(mag > tau, 1.0 - tau / mag, 0.0)
    return g * scale


# ------------------------------------------------------------------------- CG

@dataclass
class CGInfo:
    iterations: int
    residual_norm: float
    converged: bool


def cg_solve(apply_op, b, tol=1e-6, max_iters=100, x0=None, precond=None,
             check_symmetry=False, rng=None):
    """Conjugate gradients for ``apply_op(x) = b`` with ``apply_op`` SPD.

    Stops when ``||apply_op(x) - b|| <= tol * ||b||`` or after
    ``max_iters`` iterations; the returned :class:`CGInfo` says which.
    ``precond``, if given, applies an SPD approximation of the inverse
    operator (preconditioned CG); the stopping rule is unchanged.
    With ``check_symmetry`` a random inner-product test is run first and
    :class:`OperatorContractError` is raised if the operator is not
    self-adjoint.
    """
    b = np.asarray(b, dtype=np.float64)
    if check_symmetry:
        rng = np.random.default_rng(0) if rng is None else rng
        u = rng.standard_normal(b.shape)
        v = rng.standard_normal(b.shape)
        lhs = np.vdot(apply_op(u), v)
        rhs = np.vdot(u, apply_op(v))
        if abs(lhs - rhs) > 1e-8 * max(abs(lhs), abs(rhs), 1e-300):
            raise OperatorContractError(f"operator is not self-adjoint: {lhs!r} != {rhs!r}")

    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), CGInfo(0, 0.0, True)
    target = tol * bnorm

    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - apply_op(x) if x0 is not None else b.copy()
    rnorm = float(np.linalg.norm(r))
    if rnorm <= target:
        return x, CGInfo(0, rnorm, True)
    s = r.copy() if precond is None else precond(r)
    rs = float(np.vdot(r, s))
    p = s
    # flat views for in-place BLAS updates
    xf, rf = x.reshape(-1), r.reshape(-1)
    for it in range(1, max_iters + 1):
        Ap = apply_op(p)
        pAp = float(np.vdot(p, Ap))
        if pAp <= 0.0:
            # semidefinite direction: nothing more to gain along p
            return x, CGInfo(it - 1, rnorm, False)
        alpha = rs / pAp
        _axpy(p.reshape(-1), xf, a=alpha)
        _axpy(Ap.reshape(-1), rf, a=-alpha)
        rnorm = float(_nrm2(rf))
        if rnorm <= target:
            return x, CGInfo(it, rnorm, True)
        s = r.copy() if precond is None else precond(r)
        rs_new = float(np.vdot(r, s))
        # p <- s + beta p, built in the fresh array s
        _axpy(p.reshape(-1), s.reshape(-1), a=rs_new / rs)
        p = s
        rs = rs_new
    return x, CGInfo(max_iters, rnorm, False)


# ----------------------------------------------------------------------- ADMM

class FourierPreconditioner:
    """Approximate inverse of ``A^T A + mu D^T D`` that is diagonal in Fourier space.

    ``A^T A`` is replaced by the observed fraction ``M/N`` times the mean
    squared transfer function of the kernels, and ``D^T D`` by the
    periodic 5-point Laplacian. Both are SPD, so CG stays valid.
    """

    def __init__(self, model, mu):
        h, w = model.grid.shape
        self.shape = (h, w)
        power = sum(np.abs(H) ** 2 for H in model.spectra) / model.P
        self._data = model.window.achieved_ratio * power
        self._lap = periodic_laplacian_symbol((h, w))
        self.set_penalty(mu)

    def set_penalty(self, mu):
        denom = self._data + mu * self._lap
        # the constant mode is unpenalized by D; guard against an empty data term
        denom[0, 0] = max(denom[0, 0], 1e-12 * float(denom.max()))
        self._inv = 1.0 / denom

    def __call__(self, r):
        return _fft.irfft2(_fft.rfft2(r) * self._inv, self.shape)


@dataclass
class SolverConfig:
    """ADMM and rho-search settings.

    ``rho_grid=None`` builds ``n_rho`` geometric points between
    ``rho_min_factor`` and ``rho_max_factor`` times ``||A^T y||_inf``.
    """

    rho_grid: tuple | None = None
    n_rho: int = 12
    rho_min_factor: float = 1e-4
    rho_max_factor: float = 1.0
    admm_penalty: float | str = "auto"
    max_outer_iters: int = 300
    cg_tol: float = 1e-6
    cg_max_iters: int = 10
    convergence_tol: float = 1e-4
    warm_start: bool = True
    preconditioner: str | None = "fourier"
    diagnostics_path: str | None = None

    def __post_init__(self):
        if isinstance(self.admm_penalty, str):
            self._kappa()
        else:
            check_scalar(self.admm_penalty, "admm_penalty", low=0, low_inclusive=False)
        if self.preconditioner not in (None, "fourier"):
            raise ValueError(f"preconditioner must be None or 'fourier', got {self.preconditioner!r}")
        check_scalar(self.cg_tol, "cg_tol", low=0, low_inclusive=False)
        check_scalar(self.convergence_tol, "convergence_tol", low=0, low_inclusive=False)
        check_scalar(self.max_outer_iters, "max_outer_iters", low=1, integer=True)
        check_scalar(self.cg_max_iters, "cg_max_iters", low=1, integer=True)
        check_scalar(self.n_rho, "n_rho", low=1, integer=True)
        if not 0 < self.rho_min_factor <= self.rho_max_factor:
            raise ValueError("need 0 < rho_min_factor <= rho_max_factor")
        if self.rho_grid is not None:
            grid = tuple(float(r) for r in np.atleast_1d(self.rho_grid))
            if not grid:
                raise ValueError("rho_grid is empty")
            if any(r <= 0 for r in grid):
                raise ValueError("rho values must be positive")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise ValueError("rho_grid must be strictly increasing")
            self.rho_grid = grid

    def _kappa(self):
        head, _, tail = self.admm_penalty.partition(":")
        if head != "auto":
            raise ValueError(f"admm_penalty must be a number, 'auto' or 'auto:<k>', got {self.admm_penalty!r}")
        kappa = float(tail) if tail else 10.0
        if not kappa > 0:
            raise ValueError("the 'auto' penalty factor must be positive")
        return kappa

    def penalty_for(self, rho, model, y):
        if not isinstance(self.admm_penalty, str):
            return float(self.admm_penalty)
        kappa = self._kappa()
        scale = float(np.max(np.abs(model.adjoint(y)))) or 1.0
        return kappa * rho / scale

    def resolve_rho_grid(self, model, y):
        """Explicit grid, or the data-scaled default for ``(model, y)``."""
        if self.rho_grid is not None:
            return self.rho_grid
        scale = float(np.max(np.abs(model.adjoint(y))))
        if scale == 0.0:
            scale = 1.0
        if self.n_rho == 1:
            return (scale * self.rho_min_factor,)
        return tuple(np.geomspace(self.rho_min_factor * scale, self.rho_max_factor * scale, self.n_rho))


@dataclass
class SolverState:
    x: np.ndarray
    z: np.ndarray
    d: np.ndarray
    rho: float
    objective: list = field(default_factory=list)
    primal_residual: list = field(default_factory=list)
    dual_residual: list = field(default_factory=list)
    cg_iterations: list = field(default_factory=list)
    converged: bool = False
    mu: float | None = None

    @property
    def iterations(self):
        return len(self.objective)


def objective(x, model, y, rho):
    """``||A x - y||^2 + rho * TV(x)``."""
    r = model.forward(x) - y
    return float(np.vdot(r, r)) + rho * tv_norm(x)


def _unpack(record_or_model, y):
    if y is None:
        return record_or_model.model, record_or_model.y
    return record_or_model, check_vector(y, record_or_model.M, "y")


def admm_reconstruct(record, rho, config=None, y=None, init=None):
    """Reconstruct an image for a fixed regularization weight ``rho``.

    ``record`` is an :class:`~lenscs.forward.AcquisitionRecord`, or an
    :class:`~lenscs.forward.AcquisitionModel` together with ``y``.
    ``init`` is an optional :class:`SolverState` to warm start from.
    Returns the non-negative estimate and the final (unclamped) state.
    """
    config = SolverConfig() if config is None else config
    model, y = _unpack(record, y)
    check_scalar(rho, "rho", low=0, low_inclusive=False)
    mu = config.penalty_for(rho, model, y)
    tau = rho / (2.0 * mu)
    shape = model.grid.shape
    stop = config.convergence_tol * math.sqrt(model.grid.N)

    if init is None:
        x = np.zeros(shape)
        z = np.zeros((2,) + shape)
        d = np.zeros((2,) + shape)
    else:
        x, z = init.x.copy(), init.z.copy()
        # at a fixed point the scaled dual is rho * subgradient / (2 mu)
        d = init.d * (rho / init.rho)
        if init.mu is not None:
            d *= init.mu / mu
    state = SolverState(x, z, d, rho)

    aty = model.adjoint(y)
    if not np.any(y):
        state.x = np.zeros(shape)
        state.z = np.zeros((2,) + shape)
        state.d = np.zeros((2,) + shape)
        state.objective.append(0.0)
        state.primal_residual.append(0.0)
        state.dual_residual.append(0.0)
        state.cg_iterations.append(0)
        state.converged = True
        return np.zeros(shape), state

    # A^T A - mu * laplacian, with the periodic part of the laplacian folded
    # into the Fourier multiply and the border difference patched afterwards
    fused = model.normal_operator(mu * periodic_laplacian_symbol(shape))

    def normal_op(v):
        return _replicate_correction(fused(v), v, -mu)

    precond = FourierPreconditioner(model, mu) if config.preconditioner == "fourier" else None

    writer = None
    diag_file = None
    if config.diagnostics_path:
        diag_file = open(config.diagnostics_path, "a", newline="")
        writer = csv.writer(diag_file)
        writer.writerow(["rho", "iteration", "objective", "primal_residual", "dual_residual"])

    try:
        for k in range(1, config.max_outer_iters + 1):
            rhs = aty - mu * divergence(z - d)
            x, info = cg_solve(normal_op, rhs, tol=config.cg_tol,
                               max_iters=config.cg_max_iters, x0=x, precond=precond)
            dx = gradient(x)
            z_old = z
            z = group_soft_threshold(dx + d, tau)
            d = d + dx - z
            primal = float(np.linalg.norm(dx - z))
            # image units, so the stopping test does not depend on mu
            dual = float(np.linalg.norm(divergence(z - z_old)))
            resid = model.forward(x) - y
            obj = float(np.vdot(resid, resid)) + rho * float(np.sum(np.hypot(dx[0], dx[1])))
            if not (math.isfinite(obj) and math.isfinite(primal) and math.isfinite(dual)):
                raise NumericalFailure(f"non-finite value in ADMM iteration {k}", iteration=k)
            state.objective.append(obj)
            state.primal_residual.append(primal)
            state.dual_residual.append(dual)
            state.cg_iterations.append(info.iterations)
            if writer is not None:
                writer.writerow([repr(rho), k, repr(obj), repr(primal), repr(dual)])
            if primal < stop and dual < stop:
                state.converged = True
                break
    finally:
        if diag_file is not None:
            diag_file.close()

    state.x, state.z, state.d = x, z, d
    state.mu = mu
    logger.debug("rho=%.3g: %d iterations, converged=%s", rho, state.iterations, state.converged)
    return np.maximum(x, 0.0), state


# ------------------------------------------------------------------ whiteness

def whiteness_score(residual, window_side, max_lag=3):
    """Residual whiteness; higher is whiter, 0 is perfectly white.

    Minus the sum of squared normalized sample autocovariances of the
    mean-subtracted residual over all 2-D lags with ``|p|, |q| <= max_lag``
    except ``(0, 0)``. A residual with zero variance scores ``-inf``.
    """
    r = check_vector(residual, name="residual")
    check_scalar(window_side, "window_side", low=1, integer=True)
    if r.size != window_side * window_side:
        raise ValueError(f"residual has {r.size} entries, window holds {window_side ** 2}")
    r = r.reshape(window_side, window_side)
    scale = max(abs(float(np.mean(r))), float(np.sqrt(np.mean(r * r))))
    r = r - r.mean()
    n = r.size
    c0 = float(np.vdot(r, r)) / n
    if scale == 0.0 or c0 <= (1e-12 * scale) ** 2:
        return -math.inf
    s = window_side
    total = 0.0
    for p in range(-max_lag, max_lag + 1):
        for q in range(-max_lag, max_lag + 1):
            if p == 0 and q == 0:
                continue
            if abs(p) >= s or abs(q) >= s:
                continue
            a = r[max(p, 0):s + min(p, 0), max(q, 0):s + min(q, 0)]
            b = r[max(-p, 0):s + min(-p, 0), max(-q, 0):s + min(-q, 0)]
            c = float(np.vdot(a, b)) / n
            total += (c / c0) ** 2
    return -total


@dataclass
class RhoSelection:
    rho: float
    x: np.ndarray
    state: SolverState
    rhos: tuple
    scores: list
    iterations: int


def select_rho(record, config=None, y=None):
    """Sweep the rho grid in ascending order and keep the whitest residual.

    Each run is warm started from the previous one unless
    ``config.warm_start`` is false. Ties go to the smaller rho.
    """
    config = SolverConfig() if config is None else config
    model, y = _unpack(record, y)
    rhos = config.resolve_rho_grid(model, y)
    side = model.window.side

    best = None
    scores = []
    prev = None
    total_iters = 0
    for rho in rhos:
        try:
            x, state = admm_reconstruct(model, rho, config, y=y,
                                        init=prev if config.warm_start else None)
        except NumericalFailure as exc:
            logger.warning("ADMM failed for rho=%.3g: %s", rho, exc)
            scores.append(-math.inf)
            prev = None
            continue
        total_iters += state.iterations
        score = whiteness_score(model.forward(x) - y, side)
        scores.append(score)
        prev = state
        if best is None or score > best[0]:
            best = (score, rho, x, state)
    if best is None:
        raise NumericalFailure("ADMM failed for every rho on the grid")
    _, rho, x, state = best
    return RhoSelection(rho, x, state, tuple(rhos), scores, total_iters)
