"""Sample placement along rays: stratified coarse samples and inverse-CDF fine samples."""

import numpy as np
import numpy.typing as npt

from ..errors import UsageError
from ..models.camera import Ray

Array = npt.NDArray[np.float64]

PDF_FLOOR = 1e-5


def stratified_samples(
    n_rays: int, t_near: float, t_far: float, n: int, perturb: bool, rng: np.random.Generator | None = None
) -> Array:
    """n samples per ray, one per equal-width bin of [t_near, t_far]; shape (n_rays, n)."""
    if n < 2:
        raise UsageError(f"stratified sampling needs n >= 2, got {n}")
    width = (t_far - t_near) / n
    lower = t_near + (t_far - t_near) * (np.arange(n, dtype=np.float64) / n)
    if not perturb:
        return np.broadcast_to(lower + 0.5 * width, (n_rays, n)).copy()
    if rng is None:
        raise UsageError("perturbed sampling needs a random generator")
    return lower + width * rng.uniform(size=(n_rays, n))


def sample_stratified(ray: Ray, n: int, perturb: bool, rng: np.random.Generator | None = None) -> Array:
    """Sorted sample distances for a single ray."""
    return stratified_samples(1, ray.t_near, ray.t_far, n, perturb, rng)[0]


def importance_samples(
    t_coarse: Array,
    weights: Array,
    n_fine: int,
    rng: np.random.Generator | None,
    t_near: float | None = None,
    t_far: float | None = None,
    perturb: bool = True,
) -> Array:
    """Draw n_fine extra samples per ray from the piecewise-constant PDF of the coarse weights.

    Bin i spans the midpoints around coarse sample i; the outer bins are closed by
    the ray bounds (or the outermost samples when bounds are not given). Returns the
    fine samples merged and sorted with t_coarse, shape (R, S + n_fine).
    """
    t = np.asarray(t_coarse, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if t.shape != w.shape:
        raise UsageError(f"weights shape {w.shape} differs from samples shape {t.shape}")
    if np.any(w < 0.0):
        raise UsageError("importance weights must be non-negative")
    if n_fine == 0:
        return t.copy()
    u = fine_quantiles(t.shape[:-1], n_fine, perturb, rng)
    return inverse_cdf_samples(t, w, u, t_near, t_far)


def fine_quantiles(
    rows: tuple[int, ...], n_fine: int, perturb: bool, rng: np.random.Generator | None
) -> Array:
    """CDF positions of the fine samples: uniform draws, or (k + 0.5) / n_fine without jitter."""
    if perturb:
        if rng is None:
            raise UsageError("perturbed importance sampling needs a random generator")
        return rng.uniform(size=(*rows, n_fine))
    return np.broadcast_to((np.arange(n_fine) + 0.5) / n_fine, (*rows, n_fine)).copy()


def inverse_cdf_samples(
    t: Array, w: Array, u: Array, t_near: float | None = None, t_far: float | None = None
) -> Array:
    """Map CDF positions u through the weight histogram of t; returns t merged with the new samples."""
    if u.shape[-1] == 0:
        return t.copy()
    lo = t[..., :1] if t_near is None else np.full_like(t[..., :1], t_near)
    hi = t[..., -1:] if t_far is None else np.full_like(t[..., :1], t_far)
    edges = np.concatenate([lo, 0.5 * (t[..., 1:] + t[..., :-1]), hi], axis=-1)

    pdf = w + PDF_FLOOR
    pdf = pdf / pdf.sum(axis=-1, keepdims=True)
    cdf = np.concatenate([np.zeros_like(pdf[..., :1]), np.cumsum(pdf, axis=-1)], axis=-1)
    cdf[..., -1] = 1.0

    n_bins = w.shape[-1]
    idx = np.sum(cdf[..., None, :] <= u[..., :, None], axis=-1) - 1
    idx = np.clip(idx, 0, n_bins - 1)
    cdf_lo = np.take_along_axis(cdf, idx, axis=-1)
    cdf_hi = np.take_along_axis(cdf, idx + 1, axis=-1)
    edge_lo = np.take_along_axis(edges, idx, axis=-1)
    edge_hi = np.take_along_axis(edges, idx + 1, axis=-1)
    frac = (u - cdf_lo) / np.maximum(cdf_hi - cdf_lo, 1e-300)
    fine = edge_lo + np.clip(frac, 0.0, 1.0) * (edge_hi - edge_lo)
    return np.sort(np.concatenate([t, fine], axis=-1), axis=-1)


def sample_importance(
    t_coarse: npt.ArrayLike,
    weights: npt.ArrayLike,
    n_fine: int,
    rng: np.random.Generator | None,
    t_near: float | None = None,
    t_far: float | None = None,
    perturb: bool = True,
) -> Array:
    """Single-ray form of importance_samples."""
    t = np.asarray(t_coarse, dtype=np.float64)[None]
    w = np.asarray(weights, dtype=np.float64)[None]
    return importance_samples(t, w, n_fine, rng, t_near, t_far, perturb)[0]
