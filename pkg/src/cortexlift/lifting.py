"""
Cake-wavelet lift of square images to orientation scores, and its inverse.

Orientation convention: x runs along columns, y points up (towards row 0).
Channel ``k`` has orientation ``theta_k = k * pi / K`` measured counter-clockwise
from the x axis, and responds to line structures with that orientation; its
Fourier support is therefore an angular slice centred on the normal direction
``theta_k + pi / 2`` (and its antipode).
"""

from dataclasses import dataclass
from math import ceil
from pathlib import Path

import numpy as np
import scipy.fft as sfft
from scipy.interpolate import BSpline

from ._threads import fft_workers

__all__ = [
    "CakeWaveletStack",
    "build_cake_stack",
    "identity_stack",
    "lift",
    "project",
    "save_lifted",
    "load_lifted",
]

IMAG_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class CakeWaveletStack:
    """``kernels[k]`` is the DFT-domain response of channel ``k`` (unshifted layout)."""

    N: int
    K: int
    kernels: np.ndarray
    bw: int = 4
    taper: bool = False

    @property
    def thetas(self) -> np.ndarray:
        return np.arange(self.K) * np.pi / self.K

    def spatial_kernels(self) -> np.ndarray:
        """Real spatial-domain filters, one ``(N, N)`` slice per channel."""
        return np.real(sfft.ifft2(self.kernels, workers=fft_workers()))

    def l1_norm(self) -> float:
        """Largest per-channel L1 norm of the spatial filters."""
        return float(np.abs(self.spatial_kernels()).sum(axis=(1, 2)).max())


def _cardinal_bspline(order: int):
    knots = np.arange(order + 2) - (order + 1) / 2.0
    basis = BSpline.basis_element(knots, extrapolate=False)

    def evaluate(x):
        return np.nan_to_num(basis(x), nan=0.0)

    return evaluate


def _angular_profile(phi: np.ndarray, theta: float, K: int, order: int) -> np.ndarray:
    """Periodised B-spline bump over the projective angle of frequency ``phi``."""
    step = np.pi / K
    x = np.mod(phi - theta - np.pi / 2, np.pi) / step
    spline = _cardinal_bspline(order)
    reach = int(ceil((order + 1) / (2.0 * K))) + 1
    out = np.zeros_like(x)
    for m in range(-reach, reach + 1):
        out += spline(x - m * K)
    return out


def _radial_taper(radius: np.ndarray, nyquist: float) -> np.ndarray:
    r = radius / nyquist
    t = np.clip((r - 0.6) / 0.4, 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * t))


def build_cake_stack(N: int, K: int, bw: int = 4, taper: bool = False) -> CakeWaveletStack:
    """Fourier-domain cake wavelets forming an exact partition of unity.

    ``bw`` is the degree of the angular B-spline, so each slice spans
    ``(bw + 1) * pi / K`` of projective angle.  Every kernel receives exactly
    ``1 / K`` of the DC bin.
    """
    if K < 2:
        raise ValueError(f"need at least 2 orientations, got K={K}")
    if N < 8 or N % 2:
        raise ValueError(f"N must be even and >= 8, got N={N}")
    if bw < 0:
        raise ValueError(f"bw must be a non-negative integer, got {bw}")

    freqs = sfft.fftfreq(N, d=1.0 / N)  # integer frequencies, Nyquist at -N/2
    ky, kx = np.meshgrid(freqs, freqs, indexing="ij")
    half = N // 2

    # Bins on a Nyquist line have two aliases per axis; average the profile over
    # them so the discrete kernels stay exactly even and rotation covariant.
    alias_y = [ky]
    alias_x = [kx]
    ny_row = ky == -half
    ny_col = kx == -half
    alias_y.append(np.where(ny_row, half, ky))
    alias_x.append(np.where(ny_col, half, kx))

    kernels = np.empty((K, N, N))
    for k in range(K):
        theta = k * np.pi / K
        acc = np.zeros((N, N))
        for ay in alias_y:
            for ax in alias_x:
                # y points up, so the row frequency flips sign.
                acc += _angular_profile(np.arctan2(-ay, ax), theta, K, bw)
        kernels[k] = acc / 4.0

    neg = (-np.arange(N)) % N
    kernels = 0.5 * (kernels + kernels[:, neg][:, :, neg])
    kernels[:, 0, 0] = 1.0 / K

    if taper:
        kernels *= _radial_taper(np.hypot(ky, kx), half)[None]

    kernels.setflags(write=False)
    return CakeWaveletStack(N=N, K=K, kernels=kernels, bw=bw, taper=taper)


def identity_stack(N: int) -> CakeWaveletStack:
    """Single all-pass channel: lifting is the identity, K = 1."""
    kernels = np.ones((1, N, N))
    kernels.setflags(write=False)
    return CakeWaveletStack(N=N, K=1, kernels=kernels, bw=0, taper=False)


def lift(img, stack: CakeWaveletStack) -> np.ndarray:
    """Orientation score of ``img``, shape ``(N, N, K)``."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape != (stack.N, stack.N):
        raise ValueError(f"image shape {img.shape} does not match stack size N={stack.N}")
    w = fft_workers()
    spectrum = sfft.fft2(img, workers=w)
    channels = sfft.ifft2(spectrum[None] * stack.kernels, workers=w)
    residue = float(np.abs(channels.imag).max())
    scale = max(1.0, float(np.abs(img).max()))
    if residue > IMAG_TOL * scale:
        raise RuntimeError(f"lift produced imaginary residue {residue:.3e}; kernels are not even")
    return np.ascontiguousarray(np.moveaxis(channels.real, 0, -1))


def project(field) -> np.ndarray:
    """Plain sum over the orientation axis."""
    field = np.asarray(field, dtype=np.float64)
    if field.ndim != 3:
        raise ValueError(f"lifted field must be 3D, got shape {field.shape}")
    return field.sum(axis=2)


_LF_MAGIC = "LF1"


def save_lifted(field, path) -> None:
    """Dump as ``LF1 N=<N> K=<K>`` header then little-endian float64, channel by channel."""
    field = np.asarray(field, dtype=np.float64)
    N, N2, K = field.shape
    if N != N2:
        raise ValueError(f"lifted field must be N x N x K, got {field.shape}")
    with open(path, "wb") as fh:
        fh.write(f"{_LF_MAGIC} N={N} K={K}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(np.moveaxis(field, -1, 0)).astype("<f8").tobytes())


def load_lifted(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    head, sep, body = raw.partition(b"\n")
    parts = head.decode("ascii", errors="replace").split()
    if not sep or len(parts) != 3 or parts[0] != _LF_MAGIC:
        raise ValueError(f"{path}: not a lifted-field dump")
    try:
        N = int(parts[1].removeprefix("N="))
        K = int(parts[2].removeprefix("K="))
    except ValueError:
        raise ValueError(f"{path}: malformed header {head!r}") from None
    if len(body) != 8 * N * N * K:
        raise ValueError(f"{path}: expected {8 * N * N * K} payload bytes, got {len(body)}")
    data = np.frombuffer(body, dtype="<f8").reshape(K, N, N)
    return np.ascontiguousarray(np.moveaxis(data, 0, -1)).astype(np.float64)
