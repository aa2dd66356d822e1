"""Brute-force midpoint quadrature of analytic fields: the ground-truth renderer."""

import numpy as np
import numpy.typing as npt

from ..errors import UsageError
from ..models.camera import CameraIntrinsics
from ..render.composite import VALID_WEIGHT, composite
from .analytic import AnalyticField
from .camera import ray_bundle

Array = npt.NDArray[np.float64]

MIN_QUADRATURE = 256


def oracle_rays(
    field: AnalyticField,
    origins: Array,
    directions: Array,
    t_near: float,
    t_far: float,
    quadrature_n: int = 1024,
    white_background: bool = True,
    chunk_rays: int = 64,
) -> tuple[Array, Array]:
    """RGB (R, 3) and depth (R,) along rays; rays with accumulated weight below 0.5 report t_far."""
    if quadrature_n < MIN_QUADRATURE:
        raise UsageError(f"quadrature_n must be at least {MIN_QUADRATURE}, got {quadrature_n}")
    step = (t_far - t_near) / quadrature_n
    t = t_near + step * (np.arange(quadrature_n, dtype=np.float64) + 0.5)
    rgb = np.empty((origins.shape[0], 3))
    depth = np.empty(origins.shape[0])
    for lo in range(0, origins.shape[0], chunk_rays):
        sl = slice(lo, lo + chunk_rays)
        o, d = origins[sl], directions[sl]
        points = o[:, None, :] + t[None, :, None] * d[:, None, :]
        sigma = field.density(points)
        color = field.color(points, d[:, None, :])
        # each midpoint owns one full step; the last segment closes half a step past t_far
        tt = np.broadcast_to(t, sigma.shape)
        result = composite(color, sigma, tt, t_far + 0.5 * step, white_background)
        rgb[sl] = result.rgb
        depth[sl] = np.where(result.acc >= VALID_WEIGHT, result.depth, t_far)
    return rgb, depth


def oracle_render(
    field: AnalyticField,
    intrinsics: CameraIntrinsics,
    pose: npt.ArrayLike,
    quadrature_n: int = 1024,
    t_near: float = 2.0,
    t_far: float = 6.0,
    white_background: bool = True,
) -> tuple[Array, Array]:
    """(H, W, 3) image and (H, W) depth of a posed view of an analytic field."""
    origins, directions = ray_bundle(intrinsics, pose)
    rgb, depth = oracle_rays(field, origins, directions, t_near, t_far, quadrature_n, white_background)
    h, w = intrinsics.height, intrinsics.width
    return rgb.reshape(h, w, 3), depth.reshape(h, w)
