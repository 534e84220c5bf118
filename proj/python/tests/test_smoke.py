import json
import math
from pathlib import Path

import numpy as np
import pytest

import mrxfer

DATA = Path(__file__).resolve().parents[2] / "tests" / "data"


def test_fft_is_unitary_and_invertible():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((16, 12)) + 1j * rng.standard_normal((16, 12))
    k = mrxfer.fft2c(x)
    assert k.shape == x.shape
    assert np.linalg.norm(k) == pytest.approx(np.linalg.norm(x), rel=1e-12)
    np.testing.assert_allclose(mrxfer.ifft2c(k), x, atol=1e-12)
    # Centered orthonormal convention.
    want = np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(x), norm="ortho"))
    np.testing.assert_allclose(k, want, atol=1e-12)


def test_coil_stacks_keep_their_leading_axis():
    x = mrxfer.make_phantom(32, 32)
    maps = mrxfer.coil_maps(32, 32, 4, seed=1)
    coils = mrxfer.apply_coils(x, maps)
    assert coils.shape == (4, 32, 32)
    assert mrxfer.fft2c(coils).shape == (4, 32, 32)


def test_mask_is_deterministic_and_keeps_calibration():
    a = mrxfer.generate_mask(64, 64, 4.0, 16, seed=3)
    b = mrxfer.generate_mask(64, 64, 4.0, 16, seed=3)
    assert a.dtype == np.bool_
    assert np.array_equal(a, b)
    assert a[24:40, 24:40].all()
    assert a.mean() == pytest.approx(0.25, abs=0.02)
    assert mrxfer.satisfies_poisson_disc(a)


def test_unreachable_acceleration_raises():
    with pytest.raises(mrxfer.ConstraintError):
        mrxfer.generate_mask(32, 32, 8.0, 16)


def test_metrics():
    x = mrxfer.make_phantom(32, 32, "mr-like-t1", 2)
    assert math.isinf(mrxfer.psnr(x, x))
    assert mrxfer.ssim(x, x) == pytest.approx(1.0)
    assert mrxfer.convergence_samples([(0, 30), (20, 39), (40, 39.99), (60, 39.995)], 40.0) == (60.0, True)


def test_cs_improves_on_zero_filling():
    x = mrxfer.make_phantom(64, 64)
    mask = mrxfer.generate_mask(64, 64, 4.0, 16, seed=1)
    y = mrxfer.undersample(mrxfer.fft2c(x), mask)
    zf = mrxfer.ifft2c(y)
    rec, objective = mrxfer.cs_reconstruct(y, mask, iters=20)
    assert objective[-1] < objective[0]
    assert mrxfer.psnr(x, rec) > mrxfer.psnr(x, zf)


def test_spirit_returns_coil_images():
    x = mrxfer.make_phantom(32, 32)
    maps = mrxfer.coil_maps(32, 32, 4, seed=1)
    k = mrxfer.fft2c(mrxfer.apply_coils(x, maps))
    mask = mrxfer.generate_mask(32, 32, 2.0, 12, seed=1)
    y = mrxfer.undersample(k, mask)
    imgs = mrxfer.spirit_reconstruct(y, mask, 12, kernel_width=5, iters=5)
    assert imgs.shape == (4, 32, 32)
    np.testing.assert_allclose(mrxfer.fft2c(imgs)[:, mask], y[:, mask], atol=1e-10)


def test_cascade_keeps_acquired_samples(tmp_path):
    model = mrxfer.make_cascade(subnets=2, hidden_channels=4, hidden_layers=1, seed=7)
    x = mrxfer.make_phantom(32, 32)
    mask = mrxfer.generate_mask(32, 32, 4.0, 8, seed=2)
    y = mrxfer.undersample(mrxfer.fft2c(x), mask)
    rec = model.reconstruct(y, mask)
    np.testing.assert_allclose(mrxfer.fft2c(rec)[mask], y[mask], atol=1e-10)

    path = tmp_path / "m.mrxm"
    model.save(path)
    again = mrxfer.CascadeModel.load(path)
    assert again.stages == 2 and again.mode == "single-coil"
    assert np.array_equal(again.reconstruct(y, mask), rec)


def test_array_round_trip(tmp_path):
    a = np.arange(24, dtype=np.complex128).reshape(2, 3, 4) * (1 - 0.5j)
    mrxfer.save_array(tmp_path / "a.mrx", a)
    assert np.array_equal(mrxfer.load_array(tmp_path / "a.mrx"), a)
    with pytest.raises(mrxfer.FormatError):
        (tmp_path / "bad.mrx").write_bytes(b"nope")
        mrxfer.load_array(tmp_path / "bad.mrx")


def test_demo_grid_matches_golden():
    config = (DATA / "demo_grid.json").read_text()
    metrics, convergence = mrxfer.run_experiment(config)
    assert metrics == (DATA / "demo_metrics.golden.csv").read_text()
    assert convergence.splitlines()[0].startswith("R,n_train")
    with pytest.raises(ValueError):
        mrxfer.run_experiment(json.dumps({"source": {"kind": "phantom"}}))
