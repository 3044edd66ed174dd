"""scikit-learn style wrappers.

Images travel as rows of a 2-D array (one flattened ``image_shape`` image
per row) and observations as rows of length ``M``, so the estimators fit
in pipelines and model-selection utilities.

>>> acq = SpeckleAcquisition(image_shape=(32, 32), n_patterns=2, ratio=0.5)
>>> Y = acq.fit_transform(X)                         # doctest: +SKIP
>>> rec = TVReconstructor(acquisition=acq).fit(Y)    # doctest: +SKIP
>>> X_hat = rec.transform(Y)                         # doctest: +SKIP
"""
import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .experiment import build_model
from .forward import AcquisitionModel, acquire
from .grid import ImageGrid, derive_seed, make_stream
from .metrics import snr
from .tv import SolverConfig, admm_reconstruct, select_rho


def _check_images(X, shape):
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    n = shape[0] * shape[1]
    if X.shape[1] != n:
        raise ValueError(f"expected rows of {n} pixels for image_shape={shape}, got {X.shape[1]}")
    return X


class SpeckleAcquisition(TransformerMixin, BaseEstimator):
    """Simulated lensless-endoscope acquisition as a transformer.

    ``fit`` draws the illumination kernels and the pixel partition;
    ``transform`` maps each flattened image to its noisy window
    observations. ``mode`` is ``'focused'`` or ``'speckle'``.
    """

    def __init__(self, image_shape=(128, 128), mode="speckle", n_patterns=1, ratio=1.0,
                 bsnr=40.0, pupil_radius=0.15, random_state=0):
        self.image_shape = image_shape
        self.mode = mode
        self.n_patterns = n_patterns
        self.ratio = ratio
        self.bsnr = bsnr
        self.pupil_radius = pupil_radius
        self.random_state = random_state

    def fit(self, X=None, y=None):
        h, w = self.image_shape
        if X is not None:
            _check_images(X, self.image_shape)
        if self.mode not in ("focused", "speckle"):
            raise ValueError(f"mode must be 'focused' or 'speckle', got {self.mode!r}")
        mode = "focused" if self.mode == "focused" else f"speckle{int(self.n_patterns)}"
        self.model_ = build_model(ImageGrid(w, h), mode, self.ratio, int(self.random_state),
                                  self.pupil_radius)
        self.n_observations_ = self.model_.M
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = _check_images(X, self.image_shape)
        out = np.empty((X.shape[0], self.model_.M))
        for i, row in enumerate(X):
            seed = derive_seed(int(self.random_state), "noise", i)
            rec = acquire(row.reshape(self.image_shape), self.model_, self.bsnr, make_stream(seed))
            out[i] = rec.y
        return out

    def forward(self, X):
        """Noiseless observations of each image."""
        check_is_fitted(self, "model_")
        X = _check_images(X, self.image_shape)
        return np.stack([self.model_.forward(r.reshape(self.image_shape)) for r in X])


class TVReconstructor(TransformerMixin, BaseEstimator):
    """TV-regularized ADMM reconstruction with whiteness-based rho choice.

    Parameters
    ----------
    acquisition : SpeckleAcquisition or AcquisitionModel
        The (fitted) forward model the observations came from.
    rho : float or None
        Fixed regularization weight; ``None`` selects it on the grid during
        ``fit``.
    solver : SolverConfig or None
        ADMM settings; defaults when ``None``.

    Attributes
    ----------
    rho_ : float
        Weight used by :meth:`transform` (median of the per-row selections).
    rhos_ : ndarray
        Selected weight for every row seen in ``fit``.
    images_ : ndarray
        Reconstructions of the training observations.
    """

    def __init__(self, acquisition=None, rho=None, solver=None):
        self.acquisition = acquisition
        self.rho = rho
        self.solver = solver

    def _model(self):
        acq = self.acquisition
        if isinstance(acq, AcquisitionModel):
            return acq
        if acq is None:
            raise ValueError("an acquisition model is required")
        check_is_fitted(acq, "model_")
        return acq.model_

    def _config(self):
        return self.solver if self.solver is not None else SolverConfig()

    def fit(self, Y, y=None):
        model = self._model()
        Y = check_array(Y, dtype=np.float64)
        if Y.shape[1] != model.M:
            raise ValueError(f"observations have {Y.shape[1]} entries, model expects {model.M}")
        cfg = self._config()
        rhos, images = [], []
        for row in Y:
            if self.rho is None:
                sel = select_rho(model, cfg, y=row)
                rhos.append(sel.rho)
                images.append(sel.x.ravel())
            else:
                x, _ = admm_reconstruct(model, float(self.rho), cfg, y=row)
                rhos.append(float(self.rho))
                images.append(x.ravel())
        self.rhos_ = np.asarray(rhos)
        self.rho_ = float(np.median(self.rhos_))
        self.images_ = np.stack(images)
        self.image_shape_ = model.grid.shape
        return self

    def fit_transform(self, Y, y=None):
        return self.fit(Y).images_

    def transform(self, Y):
        check_is_fitted(self, "rho_")
        model = self._model()
        Y = check_array(Y, dtype=np.float64)
        if Y.shape[1] != model.M:
            raise ValueError(f"observations have {Y.shape[1]} entries, model expects {model.M}")
        cfg = self._config()
        return np.stack([admm_reconstruct(model, self.rho_, cfg, y=row)[0].ravel() for row in Y])

    def score(self, Y, X_true):
        """Mean SNR (dB) of the reconstructions of ``Y`` against ``X_true``."""
        X_hat = self.transform(Y)
        X_true = check_array(X_true, dtype=np.float64)
        vals = [snr(a.reshape(self.image_shape_), b.reshape(self.image_shape_))
                for a, b in zip(X_hat, X_true)]
        vals = [v for v in vals if math.isfinite(v)] or [math.inf]
        return float(np.mean(vals))
