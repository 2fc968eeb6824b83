"""Reference PSNR and SSIM for [0, 1] float images.

SSIM follows the standard windowed formulation: 11x11 Gaussian window with
sigma 1.5, K1 = 0.01, K2 = 0.03, luminance-weighted grayscale conversion,
and the mean taken over valid (fully inside) windows only. PSNR uses MAX = 1
and is capped at 99 dB for identical inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

PSNR_CAP = 99.0
_LUMA = np.array([0.299, 0.587, 0.114])
_K1, _K2 = 0.01, 0.03
_WIN, _SIGMA = 11, 1.5


class ShapeMismatch(ValueError):
    pass


class TooSmall(ValueError):
    pass


@dataclass
class MetricReport:
    ssim: float
    psnr: float
    n_images: int

    def as_dict(self) -> dict:
        return {"ssim": self.ssim, "psnr": self.psnr, "n_images": self.n_images}


def _check_shapes(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"image shapes differ: {a.shape} vs {b.shape}")


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for images in [0, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_shapes(a, b)
    mse = np.mean((a - b) ** 2)
    if mse <= 0.0:
        return PSNR_CAP
    return min(float(10.0 * np.log10(1.0 / mse)), PSNR_CAP)


def masked_psnr(a, b, mask) -> float:
    """PSNR restricted to pixels where mask is nonzero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_shapes(a, b)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape[: mask.ndim]:
        raise ShapeMismatch(f"mask shape {mask.shape} does not match image {a.shape}")
    if not mask.any():
        raise ValueError("empty mask")
    diff = (a - b) ** 2
    if a.ndim == mask.ndim + 1:
        diff = diff.mean(axis=-1)
    mse = float(diff[mask].mean())
    if mse <= 0.0:
        return PSNR_CAP
    return min(float(10.0 * np.log10(1.0 / mse)), PSNR_CAP)


def _to_gray(img: np.ndarray) -> np.ndarray:
    if img.ndim == 3:
        if img.shape[2] != 3:
            raise ShapeMismatch(f"expected 3 channels, got {img.shape[2]}")
        return img @ _LUMA
    if img.ndim == 2:
        return img
    raise ShapeMismatch(f"expected HxW or HxWx3 image, got shape {img.shape}")


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


_WINDOW = _gaussian_window(_WIN, _SIGMA)


def ssim_map(a, b) -> np.ndarray:
    """Local SSIM over valid 11x11 windows; shape (H-10, W-10)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_shapes(a, b)
    x = _to_gray(a)
    y = _to_gray(b)
    if min(x.shape) < _WIN:
        raise TooSmall(f"image min dimension {min(x.shape)} < window {_WIN}")
    c1 = _K1**2
    c2 = _K2**2
    mu_x = convolve2d(x, _WINDOW, mode="valid")
    mu_y = convolve2d(y, _WINDOW, mode="valid")
    var_x = convolve2d(x * x, _WINDOW, mode="valid") - mu_x * mu_x
    var_y = convolve2d(y * y, _WINDOW, mode="valid") - mu_y * mu_y
    cov = convolve2d(x * y, _WINDOW, mode="valid") - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return num / den


def ssim(a, b) -> float:
    """Mean structural similarity over valid 11x11 windows."""
    return float(np.mean(ssim_map(a, b)))


def report(pairs) -> MetricReport:
    """Aggregate SSIM/PSNR over an iterable of (reference, candidate) pairs."""
    ssims, psnrs = [], []
    for ref, cand in pairs:
        ssims.append(ssim(ref, cand))
        psnrs.append(psnr(ref, cand))
    if not ssims:
        raise ValueError("no image pairs")
    return MetricReport(
        ssim=float(np.mean(ssims)), psnr=float(np.mean(psnrs)), n_images=len(ssims)
    )
