"""Image-quality and depth metrics."""

import math

import numpy as np
import numpy.typing as npt
from numpy.lib.stride_tricks import sliding_window_view

from .errors import UsageError

Array = npt.NDArray[np.float64]

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def _same_shape(a: npt.ArrayLike, b: npt.ArrayLike) -> tuple[Array, Array]:
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise UsageError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x, y


def psnr(a: npt.ArrayLike, b: npt.ArrayLike) -> float:
    """Peak signal-to-noise ratio in dB for peak 1.0, capped at 100 dB."""
    x, y = _same_shape(a, b)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, -10.0 * math.log10(mse))


def luma(image: npt.ArrayLike) -> Array:
    """ITU-R 601 luma of an RGB image; single-channel input passes through."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3 and img.shape[-1] == 3:
        return np.asarray(img @ LUMA_WEIGHTS)
    if img.ndim == 2:
        return img
    raise UsageError(f"expected an H x W or H x W x 3 image, got shape {img.shape}")


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> Array:
    """Normalized 2-D Gaussian kernel."""
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return np.asarray(kernel / kernel.sum())


def ssim(a: npt.ArrayLike, b: npt.ArrayLike, data_range: float = 1.0) -> float:
    """Mean structural similarity of the luma channels over valid 11 x 11 Gaussian windows."""
    x, y = _same_shape(a, b)
    ya, yb = luma(x), luma(y)
    if ya.shape[0] < SSIM_WINDOW or ya.shape[1] < SSIM_WINDOW:
        raise UsageError(f"image {ya.shape[1]}x{ya.shape[0]} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    kernel = gaussian_window()

    def local_mean(img: Array) -> Array:
        return np.einsum("ijkl,kl->ij", sliding_window_view(img, kernel.shape), kernel)

    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a, mu_b = local_mean(ya), local_mean(yb)
    var_a = local_mean(ya * ya) - mu_a * mu_a
    var_b = local_mean(yb * yb) - mu_b * mu_b
    cov = local_mean(ya * yb) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def depth_mse(pred: npt.ArrayLike, gt: npt.ArrayLike, mask: npt.ArrayLike | None = None) -> float:
    """Mean squared depth difference over the pixels where mask is true."""
    p, g = _same_shape(pred, gt)
    m = np.ones(p.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if m.shape != p.shape:
        raise UsageError(f"mask shape {m.shape} differs from depth shape {p.shape}")
    if not m.any():
        raise UsageError("depth mask selects no pixels")
    return float(np.mean((p[m] - g[m]) ** 2))
