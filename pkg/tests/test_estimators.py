import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from lenscs.estimators import SpeckleAcquisition, TVReconstructor
from lenscs.grid import ImageGrid, make_stream
from lenscs.phantom import make_phantom
from lenscs.tv import SolverConfig


@pytest.fixture(scope="module")
def images():
    return np.stack([make_phantom(ImageGrid.square(16), make_stream(s)).ravel() for s in range(2)])


def test_params_and_clone():
    acq = SpeckleAcquisition(image_shape=(16, 16), n_patterns=2, ratio=0.5, random_state=3)
    p = acq.get_params()
    assert p["n_patterns"] == 2 and p["ratio"] == 0.5 and p["random_state"] == 3
    c = clone(acq)
    assert c.get_params() == p
    acq.set_params(ratio=0.8)
    assert acq.ratio == 0.8
    rec = TVReconstructor(acquisition=acq, rho=0.1)
    assert set(rec.get_params(deep=False)) == {"acquisition", "rho", "solver"}


def test_acquisition_transform(images):
    acq = SpeckleAcquisition(image_shape=(16, 16), n_patterns=2, ratio=0.5, random_state=1)
    with pytest.raises(NotFittedError):
        acq.transform(images)
    Y = acq.fit_transform(images)
    assert Y.shape == (2, acq.n_observations_)
    assert acq.n_observations_ == acq.model_.M == 11 * 11
    np.testing.assert_array_equal(Y, acq.transform(images))
    clean = acq.forward(images)
    assert not np.array_equal(Y, clean)
    assert np.linalg.norm(Y - clean) < 0.1 * np.linalg.norm(clean)


def test_acquisition_validation(images):
    with pytest.raises(ValueError):
        SpeckleAcquisition(image_shape=(8, 8)).fit(images)
    with pytest.raises(ValueError):
        SpeckleAcquisition(image_shape=(16, 16), mode="raster").fit()


def test_reconstructor_round_trip(images):
    acq = SpeckleAcquisition(image_shape=(16, 16), mode="speckle", n_patterns=1, ratio=1.0,
                             bsnr=40.0, random_state=2).fit()
    Y = acq.transform(images)
    rec = TVReconstructor(acquisition=acq, solver=SolverConfig(n_rho=4))
    X_hat = rec.fit_transform(Y)
    assert X_hat.shape == images.shape
    assert rec.rhos_.shape == (2,)
    assert rec.rho_ == pytest.approx(np.median(rec.rhos_))
    assert np.all(X_hat >= 0)
    assert rec.transform(Y).shape == images.shape
    assert np.isfinite(rec.score(Y, images))


def test_reconstructor_fixed_rho_and_model(images):
    acq = SpeckleAcquisition(image_shape=(16, 16), mode="focused", ratio=1.0).fit()
    rec = TVReconstructor(acquisition=acq.model_, rho=1e-3).fit(acq.transform(images))
    np.testing.assert_array_equal(rec.rhos_, [1e-3, 1e-3])


def test_reconstructor_errors(images):
    with pytest.raises(ValueError):
        TVReconstructor().fit(np.zeros((1, 4)))
    acq = SpeckleAcquisition(image_shape=(16, 16)).fit()
    with pytest.raises(ValueError):
        TVReconstructor(acquisition=acq).fit(np.zeros((1, 5)))
    with pytest.raises(NotFittedError):
        TVReconstructor(acquisition=acq).transform(np.zeros((1, acq.model_.M)))
