import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from cortexlift.imagegrid import (
    as_image,
    gaussian_blur,
    gaussian_kernel,
    load_image,
    periodic_convolve,
    read_rescale_sidecar,
    save_image,
)


def _write_gray(path, data, mode="L"):
    Image.fromarray(np.asarray(data, dtype=np.uint8), mode=mode).save(path)


def test_load_uniform_128(tmp_path):
    path = tmp_path / "grey.png"
    _write_gray(path, np.full((16, 16), 128))
    img = load_image(path)
    assert img.shape == (16, 16)
    assert np.all(img == 128 / 255)


def test_load_rejects_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_image(tmp_path / "nope.png")


def test_load_rejects_non_square(tmp_path):
    path = tmp_path / "wide.png"
    _write_gray(path, np.zeros((8, 12)))
    with pytest.raises(ValueError, match="square"):
        load_image(path)


def test_load_rejects_colour(tmp_path):
    path = tmp_path / "rgb.png"
    Image.fromarray(np.zeros((8, 8, 3), dtype=np.uint8), mode="RGB").save(path)
    with pytest.raises(ValueError, match="grayscale"):
        load_image(path)


@pytest.mark.parametrize("suffix", [".png", ".pgm"])
def test_byte_roundtrip(tmp_path, rng, suffix):
    data = rng.integers(0, 256, size=(12, 12))
    path = tmp_path / f"img{suffix}"
    save_image(data / 255.0, path)
    assert np.array_equal(np.rint(load_image(path) * 255).astype(int), data)


def test_save_clips_without_rescale(tmp_path):
    path = tmp_path / "clip.png"
    save_image(np.array([[-1.0, 0.5], [2.0, 1.0]]), path)
    back = np.asarray(Image.open(path))
    assert back.tolist() == [[0, 128], [255, 255]]


def test_save_rescale_sidecar(tmp_path):
    img = np.array([[-0.5, 0.0], [0.25, 1.5]])
    path = tmp_path / "out.png"
    save_image(img, path, rescale=True)
    lo, hi = read_rescale_sidecar(path)
    assert (lo, hi) == (-0.5, 1.5)
    back = np.asarray(Image.open(path))
    assert back.min() == 0 and back.max() == 255
    # affine map back recovers the values to within one grey level
    recovered = lo + back / 255.0 * (hi - lo)
    assert np.max(np.abs(recovered - img)) <= (hi - lo) / 255.0


def test_as_image_rejects_bad_input():
    with pytest.raises(ValueError):
        as_image(np.zeros((3, 4)))
    with pytest.raises(ValueError):
        as_image(np.array([[np.nan, 0], [0, 0]]))


def test_gaussian_kernel_unit_mass_and_symmetric():
    k = gaussian_kernel(32, 3.0)
    assert abs(k.sum() - 1.0) < 1e-14
    assert np.allclose(k, np.roll(k[::-1, ::-1], 1, axis=(0, 1)))


def test_blur_keeps_constants():
    img = np.full((20, 20), 0.3)
    assert np.allclose(gaussian_blur(img, 4.0), 0.3, atol=1e-15)


def test_blur_matches_direct_periodic_sum(rng):
    # brute-force circular convolution as the oracle
    n, sigma = 10, 1.3
    img = rng.random((n, n))
    k = gaussian_kernel(n, sigma)
    expected = np.zeros_like(img)
    for i in range(n):
        for j in range(n):
            for a in range(n):
                for b in range(n):
                    expected[i, j] += k[a, b] * img[(i - a) % n, (j - b) % n]
    assert np.allclose(gaussian_blur(img, sigma), expected, atol=1e-13)


def test_blur_rejects_bad_sigma():
    with pytest.raises(ValueError):
        gaussian_blur(np.zeros((8, 8)), 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(4, 24), st.floats(0.3, 6.0), st.integers(0, 2**31 - 1))
def test_blur_preserves_mean_and_range(n, sigma, seed):
    img = np.random.default_rng(seed).random((n, n))
    out = gaussian_blur(img, sigma)
    assert abs(out.mean() - img.mean()) < 1e-12
    assert out.min() >= img.min() - 1e-12 and out.max() <= img.max() + 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(4, 16), st.integers(0, 2**31 - 1), st.integers(-5, 5), st.integers(-5, 5))
def test_convolution_commutes_with_shift(n, seed, di, dj):
    rng = np.random.default_rng(seed)
    img, ker = rng.random((n, n)), rng.random((n, n))
    a = periodic_convolve(np.roll(img, (di, dj), axis=(0, 1)), ker)
    b = np.roll(periodic_convolve(img, ker), (di, dj), axis=(0, 1))
    assert np.allclose(a, b, atol=1e-12)
