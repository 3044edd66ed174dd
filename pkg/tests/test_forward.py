import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lenscs.forward import (AcquisitionModel, AcquisitionRecord, NoiseModel, acquire, adjoint,
                            calibrate_noise, convolve, correlate, forward, load_record,
                            save_record)
from lenscs.grid import (CenteredWindow, ImageGrid, centered_window, embed, make_partition,
                         make_stream, restrict)
from lenscs.optics import Kernel, PupilModel, focused_psf, speckle_psf

from conftest import rel_err
from oracles import dense_operator, nested_loop_convolution


def random_kernel(rng, shape, kind="speckle"):
    img = rng.random(shape)
    return Kernel(img, kind, 0 if kind == "speckle" else None)


def random_model(rng, n, P, ratio, seed=0):
    g = ImageGrid.square(n)
    kernels = [random_kernel(rng, g.shape) for _ in range(P)]
    part = make_partition(g.N, P, make_stream(seed))
    return AcquisitionModel(kernels, part, centered_window(g, ratio))


def test_convolve_delta_is_identity(rng):
    x = rng.standard_normal((9, 8))
    d = Kernel.delta(ImageGrid(8, 9))
    assert rel_err(convolve(x, d), x) <= 1e-12
    assert rel_err(correlate(x, d), x) <= 1e-12


def test_convolve_zero(rng):
    k = random_kernel(rng, (8, 8))
    np.testing.assert_array_equal(convolve(np.zeros((8, 8)), k), 0.0)


@pytest.mark.parametrize("shape", [(8, 8), (7, 10)])
def test_convolve_matches_nested_loop(rng, shape):
    x = rng.standard_normal(shape)
    k = random_kernel(rng, shape)
    assert rel_err(convolve(x, k), nested_loop_convolution(x, k.image)) <= 1e-12


def test_convolve_shift_by_offset_tap():
    x = np.zeros((6, 6))
    x[1, 2] = 1.0
    img = np.zeros((6, 6))
    img[3, 4] = 1.0  # center (3, 3) plus one column
    out = convolve(x, Kernel(img, "focused"))
    assert out[1, 3] == pytest.approx(1.0)
    assert abs(out.sum() - 1.0) < 1e-12


def test_correlate_is_adjoint_of_convolve(rng):
    k = random_kernel(rng, (10, 10))
    u = rng.standard_normal((10, 10))
    v = rng.standard_normal((10, 10))
    a = np.vdot(convolve(u, k), v)
    b = np.vdot(u, correlate(v, k))
    assert abs(a - b) <= 1e-12 * abs(a)


def test_forward_single_full_window_is_convolution(rng):
    m = random_model(rng, 16, 1, 1.0)
    x = rng.standard_normal((16, 16))
    assert rel_err(m.forward(x), convolve(x, m.kernels[0]).ravel()) <= 1e-12


@pytest.mark.parametrize("P", [1, 2, 4])
@pytest.mark.parametrize("ratio", [1.0, 0.5, 0.2])
def test_forward_delta_kernels_is_restriction(rng, P, ratio):
    g = ImageGrid.square(12)
    kernels = [Kernel.delta(g) for _ in range(P)]
    m = AcquisitionModel(kernels, make_partition(g.N, P, make_stream(1)), centered_window(g, ratio))
    x = rng.standard_normal(g.shape)
    assert rel_err(m.forward(x), restrict(x, m.window)) <= 1e-12


def test_adjoint_delta_full_window_is_embed(rng):
    g = ImageGrid.square(8)
    m = AcquisitionModel([Kernel.delta(g)], make_partition(g.N, 1, make_stream(1)),
                         centered_window(g, 1.0))
    v = rng.standard_normal(m.M)
    assert rel_err(m.adjoint(v), embed(v, m.window)) <= 1e-12
    np.testing.assert_array_equal(m.adjoint(np.zeros(m.M)), 0.0)


@pytest.mark.parametrize("P", [1, 2, 4])
@pytest.mark.parametrize("ratio", [1.0, 0.5, 0.15])
def test_forward_matches_dense_oracle(rng, P, ratio):
    m = random_model(rng, 12, P, ratio, seed=P)
    A = dense_operator([k.image for k in m.kernels], m.partition.labels, m.window.side)
    for _ in range(3):
        x = rng.standard_normal((12, 12))
        assert rel_err(m.forward(x), A @ x.ravel()) <= 1e-12
        v = rng.standard_normal(m.M)
        assert rel_err(m.adjoint(v), (A.T @ v).reshape(12, 12)) <= 1e-12
        assert rel_err(m.normal(x), (A.T @ (A @ x.ravel())).reshape(12, 12)) <= 1e-12


@pytest.mark.parametrize("P,ratio", [(1, 1.0), (2, 0.5)])
def test_normal_operator_adds_spectral_shift(rng, P, ratio):
    m = random_model(rng, 12, P, ratio, seed=P)
    A = dense_operator([k.image for k in m.kernels], m.partition.labels, m.window.side)
    shift = rng.random((12, 7))
    op = m.normal_operator(shift)
    x = rng.standard_normal((12, 12))
    expected = (A.T @ (A @ x.ravel())).reshape(12, 12) + np.fft.irfft2(np.fft.rfft2(x) * shift, s=(12, 12))
    assert rel_err(op(x), expected) <= 1e-12


@pytest.mark.parametrize("P", [1, 2, 4])
def test_adjoint_identity_many_instances(P):
    rng = np.random.default_rng(100 + P)
    worst = 0.0
    for i in range(100):
        ratio = rng.uniform(0.05, 1.0)
        m = random_model(rng, 16, P, ratio, seed=i)
        x = rng.standard_normal((16, 16))
        v = rng.standard_normal(m.M)
        a = float(np.vdot(m.forward(x), v))
        b = float(np.vdot(x, m.adjoint(v)))
        worst = max(worst, abs(a - b) / max(abs(a), abs(b)))
    assert worst <= 1e-10


def test_forward_linear(rng):
    m = random_model(rng, 16, 2, 0.6)
    x1, x2 = rng.standard_normal((2, 16, 16))
    lhs = m.forward(2.5 * x1 - 0.5 * x2)
    rhs = 2.5 * m.forward(x1) - 0.5 * m.forward(x2)
    assert rel_err(lhs, rhs) <= 1e-12


def test_module_level_functions(rng):
    m = random_model(rng, 8, 2, 0.5)
    x = rng.standard_normal((8, 8))
    np.testing.assert_array_equal(forward(x, m), m.forward(x))
    v = rng.standard_normal(m.M)
    np.testing.assert_array_equal(adjoint(v, m), m.adjoint(v))


def test_model_validation(rng):
    g = ImageGrid.square(8)
    k = random_kernel(rng, (8, 8))
    part2 = make_partition(g.N, 2, make_stream(0))
    with pytest.raises(ValueError):
        AcquisitionModel([k], part2, centered_window(g, 1.0))
    with pytest.raises(ValueError):
        AcquisitionModel([random_kernel(rng, (6, 6))], make_partition(g.N, 1, make_stream(0)),
                         centered_window(g, 1.0))
    m = AcquisitionModel([k, k], part2, centered_window(g, 1.0))
    with pytest.raises(ValueError):
        m.forward(np.zeros((6, 6)))
    with pytest.raises(ValueError):
        m.adjoint(np.zeros(3))
    with pytest.raises(ValueError):
        m.forward(np.full((8, 8), np.nan))


def test_calibrate_noise_examples():
    y = np.full(100, 10.0)  # norm 100, M 100
    assert calibrate_noise(y, 40).sigma == pytest.approx(0.1, rel=1e-12)
    assert calibrate_noise(y, 0).sigma == pytest.approx(100 / 10, rel=1e-12)
    assert calibrate_noise(y, math.inf).sigma == 0.0
    with pytest.raises(ValueError):
        calibrate_noise(np.zeros(5), 40)
    with pytest.raises(ValueError):
        calibrate_noise(y, math.nan)


def test_calibrated_noise_realizes_target_bsnr():
    rng = np.random.default_rng(7)
    y = rng.random(16384)
    sigma = calibrate_noise(y, 40).sigma
    stream = make_stream(8)
    for _ in range(100):
        n = sigma * stream.standard_normal(y.size)
        realized = 20 * np.log10(np.linalg.norm(y) / np.linalg.norm(n))
        assert abs(realized - 40) <= 0.5


def test_noise_model_rejects_negative_sigma():
    with pytest.raises(ValueError):
        NoiseModel(-1.0, 40.0)


def _focused_model(n=32, ratio=1.0):
    g = ImageGrid.square(n)
    k = focused_psf(PupilModel(g))
    return AcquisitionModel([k], make_partition(g.N, 1, make_stream(0)), centered_window(g, ratio))


def test_acquire_noiseless_and_deterministic(rng):
    m = _focused_model()
    x = rng.random((32, 32))
    rec = acquire(x, m, math.inf, make_stream(1))
    np.testing.assert_array_equal(rec.y, rec.y_clean)
    a = acquire(x, m, 40.0, make_stream(2))
    b = acquire(x, m, 40.0, make_stream(2))
    np.testing.assert_array_equal(a.y, b.y)
    c = acquire(x, m, 40.0, make_stream(3))
    assert not np.array_equal(a.y, c.y)
    assert a.window_image().shape == (32, 32)


def test_record_validates_lengths(rng):
    m = _focused_model(8, 0.5)
    with pytest.raises(ValueError):
        AcquisitionRecord(np.zeros(m.M + 1), m, NoiseModel(0.0, math.inf))


def test_record_roundtrip(tmp_path, rng):
    g = ImageGrid.square(16)
    pm = PupilModel(g)
    ks = [speckle_psf(pm, make_stream(s), seed=s) for s in (11, 12)]
    m = AcquisitionModel(ks, make_partition(g.N, 2, make_stream(5), seed=5), centered_window(g, 0.4))
    x = rng.random((16, 16))
    rec = acquire(x, m, 30.0, make_stream(6), seed=6)
    path = tmp_path / "rec.npz"
    save_record(rec, path)
    back = load_record(path)
    np.testing.assert_array_equal(back.y, rec.y)
    np.testing.assert_array_equal(back.y_clean, rec.y_clean)
    assert back.noise == rec.noise
    assert back.model.describe() == m.describe()
    assert rel_err(back.model.forward(x), m.forward(x)) <= 1e-14
    with np.load(path) as data:
        assert data["y"].dtype == np.dtype("<f8")
        assert data["y_clean"].dtype == np.dtype("<f8")


def test_record_roundtrip_noiseless(tmp_path, rng):
    m = _focused_model(8)
    rec = acquire(rng.random((8, 8)), m, math.inf, make_stream(0))
    save_record(rec, tmp_path / "r.npz")
    back = load_record(tmp_path / "r.npz")
    assert back.noise.sigma == 0.0 and math.isinf(back.noise.bsnr_target)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 10), st.integers(1, 4), st.floats(0.05, 1.0), st.integers(0, 10**6))
def test_adjoint_property(n, P, ratio, seed):
    rng = np.random.default_rng(seed)
    P = min(P, n * n)
    m = random_model(rng, n, P, ratio, seed)
    x = rng.standard_normal((n, n))
    v = rng.standard_normal(m.M)
    a = float(np.vdot(m.forward(x), v))
    b = float(np.vdot(x, m.adjoint(v)))
    assert abs(a - b) <= 1e-10 * max(abs(a), abs(b), 1e-12)
