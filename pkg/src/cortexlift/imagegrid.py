"""
Square grayscale images: 8-bit file I/O and periodic Gaussian filtering.

An image is a plain ``(N, N)`` float64 array of normalized luminance.  Loaded
and generated images live in [0, 1]; anything produced by the model may leave
that range, so nothing here clips unless asked to.
"""

from pathlib import Path

import numpy as np
import scipy.fft as sfft
from PIL import Image as PILImage

from ._threads import fft_workers

__all__ = [
    "as_image",
    "load_image",
    "save_image",
    "read_rescale_sidecar",
    "gaussian_kernel",
    "gaussian_blur",
    "periodic_convolve",
]


def as_image(values) -> np.ndarray:
    """Validate and return a read-only float64 copy of a square 2D grid."""
    img = np.array(values, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ValueError(f"image must be a square 2D grid, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    img.setflags(write=False)
    return img


def load_image(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    with PILImage.open(path) as im:
        if im.mode != "L":
            raise ValueError(f"{path}: expected 8-bit grayscale (mode 'L'), got mode {im.mode!r}")
        data = np.asarray(im, dtype=np.uint8)
    if data.shape[0] != data.shape[1]:
        raise ValueError(f"{path}: image must be square, got {data.shape[1]}x{data.shape[0]}")
    return as_image(data / 255.0)


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".rescale.txt")


def save_image(img, path, rescale: bool = False) -> None:
    """Write ``img`` as 8-bit PNG or binary PGM (chosen by suffix).

    With ``rescale`` the values are mapped affinely so min -> 0 and max -> 255,
    and the original min/max go to a ``<name>.rescale.txt`` sidecar.  Without
    it, values are clipped to [0, 1] and rounded to the nearest byte.
    """
    img = np.asarray(img, dtype=np.float64)
    path = Path(path)
    if rescale:
        lo, hi = float(img.min()), float(img.max())
        span = hi - lo
        scaled = (img - lo) / span if span > 0 else np.zeros_like(img)
        data = np.rint(scaled * 255.0).astype(np.uint8)
        _sidecar_path(path).write_text(f"min={lo!r}\nmax={hi!r}\n")
    else:
        data = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    fmt = "PPM" if path.suffix.lower() in (".pgm", ".pnm") else "PNG"
    PILImage.fromarray(data, mode="L").save(path, format=fmt)


def read_rescale_sidecar(path) -> tuple:
    """Return the (min, max) recorded when ``path`` was saved with rescaling."""
    fields = {}
    for line in _sidecar_path(Path(path)).read_text().splitlines():
        key, _, value = line.partition("=")
        fields[key.strip()] = float(value)
    return fields["min"], fields["max"]


def gaussian_kernel(n: int, sigma: float) -> np.ndarray:
    """Sampled, unit-sum 2D Gaussian on an ``n x n`` torus, centred at index (0, 0)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    d = np.arange(n)
    d = np.minimum(d, n - d).astype(np.float64)
    g = np.exp(-(d**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def periodic_convolve(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Circular convolution of two equally shaped real 2D arrays."""
    w = fft_workers()
    spec = sfft.rfft2(img, workers=w) * sfft.rfft2(kernel, workers=w)
    return sfft.irfft2(spec, s=img.shape, workers=w)


def gaussian_blur(img, sigma: float) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ValueError(f"image must be a square 2D grid, got shape {img.shape}")
    return periodic_convolve(img, gaussian_kernel(img.shape[0], sigma))
