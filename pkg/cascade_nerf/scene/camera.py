"""Pinhole camera model: pixels to world-space rays and back."""

import math

import numpy as np
import numpy.typing as npt

from ..errors import PixelRangeError, PoseValidationError
from ..models.camera import CameraIntrinsics, Ray

Array = npt.NDArray[np.float64]


def check_pose(pose: npt.ArrayLike, source: str = "<pose>", tol: float = 1e-6) -> Array:
    """Validate a 4x4 camera-to-world rigid transform and return it as float64."""
    m = np.asarray(pose, dtype=np.float64)
    if m.shape != (4, 4):
        raise PoseValidationError(source, f"pose must be 4x4, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise PoseValidationError(source, "pose contains non-finite values")
    if not np.allclose(m[3], (0.0, 0.0, 0.0, 1.0), atol=tol):
        raise PoseValidationError(source, f"bottom row must be (0, 0, 0, 1), got {m[3].tolist()}")
    rot = m[:3, :3]
    deviation = float(np.abs(rot.T @ rot - np.eye(3)).max())
    if deviation > tol:
        raise PoseValidationError(source, f"rotation is not orthonormal (deviation {deviation:.3g})")
    if np.linalg.det(rot) < 0.0:
        raise PoseValidationError(source, "rotation is a reflection")
    return m


def look_at(eye: npt.ArrayLike, target: npt.ArrayLike = (0.0, 0.0, 0.0), up: npt.ArrayLike = (0.0, 0.0, 1.0)) -> Array:
    """Camera-to-world pose at eye whose -z axis points at target."""
    eye_v = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye_v
    forward /= np.linalg.norm(forward)
    z_axis = -forward
    up_v = np.asarray(up, dtype=np.float64)
    x_axis = np.cross(up_v, z_axis)
    if np.linalg.norm(x_axis) < 1e-9:
        x_axis = np.cross(np.array([0.0, 1.0, 0.0]), z_axis)
    x_axis /= np.linalg.norm(x_axis)
    y_axis = np.cross(z_axis, x_axis)
    pose = np.eye(4)
    pose[:3, 0] = x_axis
    pose[:3, 1] = y_axis
    pose[:3, 2] = z_axis
    pose[:3, 3] = eye_v
    return pose


def hemisphere_poses(
    count: int,
    radius: float,
    rng: np.random.Generator,
    min_elevation: float = math.radians(10.0),
    max_elevation: float = math.radians(80.0),
) -> list[Array]:
    """Poses on the upper hemisphere (z > 0) looking at the origin."""
    poses = []
    for _ in range(count):
        azimuth = rng.uniform(0.0, 2.0 * math.pi)
        elevation = rng.uniform(min_elevation, max_elevation)
        eye = radius * np.array([
            math.cos(elevation) * math.cos(azimuth),
            math.cos(elevation) * math.sin(azimuth),
            math.sin(elevation),
        ])
        poses.append(look_at(eye))
    return poses


def pixel_grid(intrinsics: CameraIntrinsics) -> npt.NDArray[np.int64]:
    """All (u, v) pixels in row-major order, shape (H*W, 2)."""
    v, u = np.divmod(np.arange(intrinsics.pixel_count, dtype=np.int64), intrinsics.width)
    return np.stack([u, v], axis=-1)


def ray_bundle(intrinsics: CameraIntrinsics, pose: npt.ArrayLike, pixels: npt.ArrayLike | None = None) -> tuple[Array, Array]:
    """Origins and unit directions for (u, v) pixel pairs, shape (N, 3) each.

    Pixels default to the full image in row-major order.
    """
    m = np.asarray(pose, dtype=np.float64)
    px = pixel_grid(intrinsics) if pixels is None else np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    u = px[:, 0].astype(np.float64)
    v = px[:, 1].astype(np.float64)
    f = intrinsics.focal
    cam = np.stack([
        (u + 0.5 - 0.5 * intrinsics.width) / f,
        -(v + 0.5 - 0.5 * intrinsics.height) / f,
        -np.ones_like(u),
    ], axis=-1)
    directions = cam @ m[:3, :3].T
    directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
    origins = np.broadcast_to(m[:3, 3], directions.shape).copy()
    return origins, directions


def ray_for_pixel(
    intrinsics: CameraIntrinsics, pose: npt.ArrayLike, u: int, v: int, t_near: float = 2.0, t_far: float = 6.0
) -> Ray:
    """Ray through the center of pixel (u, v)."""
    if not (0 <= u < intrinsics.width and 0 <= v < intrinsics.height):
        raise PixelRangeError(u, v, intrinsics.width, intrinsics.height)
    origins, directions = ray_bundle(intrinsics, pose, [[u, v]])
    return Ray(origins[0], directions[0], t_near, t_far)


def rays_for_view(
    intrinsics: CameraIntrinsics, pose: npt.ArrayLike, t_near: float = 2.0, t_far: float = 6.0
) -> list[tuple[tuple[int, int], Ray]]:
    """Every pixel's ray in row-major order."""
    pixels = pixel_grid(intrinsics)
    origins, directions = ray_bundle(intrinsics, pose, pixels)
    return [
        ((int(u), int(v)), Ray(o, d, t_near, t_far))
        for (u, v), o, d in zip(pixels, origins, directions, strict=True)
    ]


def project(intrinsics: CameraIntrinsics, pose: npt.ArrayLike, points: npt.ArrayLike) -> Array:
    """Continuous image coordinates (x, y) of world points; pixel (u, v) has its center at (u + 0.5, v + 0.5)."""
    m = np.asarray(pose, dtype=np.float64)
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cam = (p - m[:3, 3]) @ m[:3, :3]
    depth = -cam[:, 2]
    f = intrinsics.focal
    x = f * cam[:, 0] / depth + 0.5 * intrinsics.width
    y = -f * cam[:, 1] / depth + 0.5 * intrinsics.height
    return np.stack([x, y], axis=-1)
