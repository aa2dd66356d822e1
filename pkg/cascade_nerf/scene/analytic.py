"""Closed-form radiance fields used as ground truth.

A field is a sum of soft primitives. Density of each primitive is a sigmoid ramp
across its surface; color is a base albedo, optionally tinted by the viewing
direction and modulated by a positional stripe texture. The scene's color at a
point is the density-weighted mix of its primitives' colors.
"""

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from ..errors import UsageError

Array = npt.NDArray[np.float64]

VIEW_AXIS = np.array([1.0, 1.0, 1.0]) / np.sqrt(3.0)


def _sigmoid(z: Array) -> Array:
    return np.asarray(0.5 * (np.tanh(0.5 * z) + 1.0))


@dataclass(frozen=True)
class _Primitive:
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    sigma_max: float = 200.0
    softness: float = 0.005
    albedo: tuple[float, float, float] = (0.5, 0.5, 0.5)
    tint: tuple[float, float, float] = (0.0, 0.0, 0.0)
    texture: float = 0.0
    texture_freq: float = 4.0

    def signed_inside(self, x: Array) -> Array:
        """Positive inside, negative outside, in scene units."""
        raise NotImplementedError

    def density(self, x: Array) -> Array:
        return self.sigma_max * _sigmoid(self.signed_inside(x) / self.softness)

    def color(self, x: Array, d: Array) -> Array:
        c = np.broadcast_to(np.asarray(self.albedo), x.shape).copy()
        c += np.asarray(self.tint) * (d @ VIEW_AXIS)[..., None]
        if self.texture:
            local = x - np.asarray(self.center)
            stripes = np.sin(np.pi * self.texture_freq * local[..., 0]) * np.sin(np.pi * self.texture_freq * local[..., 2])
            c += self.texture * stripes[..., None]
        return np.clip(c, 0.0, 1.0)


@dataclass(frozen=True)
class SoftSphere(_Primitive):
    radius: float = 1.0

    def signed_inside(self, x: Array) -> Array:
        return np.asarray(self.radius - np.linalg.norm(x - np.asarray(self.center), axis=-1))


@dataclass(frozen=True)
class SoftBox(_Primitive):
    half_extent: tuple[float, float, float] = (0.5, 0.5, 0.5)

    def signed_inside(self, x: Array) -> Array:
        # distance to the nearest face, negative outside along the worst axis
        per_axis = np.asarray(self.half_extent) - np.abs(x - np.asarray(self.center))
        return np.asarray(per_axis.min(axis=-1))


@dataclass(frozen=True)
class AnalyticField:
    """A named composition of soft primitives inside a bounding sphere."""

    name: str
    primitives: tuple[_Primitive, ...] = field(default_factory=tuple)
    bound_radius: float = 1.5
    empty_color: tuple[float, float, float] = (0.5, 0.5, 0.5)

    def density(self, x: npt.ArrayLike) -> Array:
        """sigma(x) >= 0, zero outside the bounding sphere; x has shape (..., 3)."""
        p = np.asarray(x, dtype=np.float64)
        total = np.zeros(p.shape[:-1])
        for prim in self.primitives:
            total += prim.density(p)
        inside = np.linalg.norm(p, axis=-1) <= self.bound_radius
        return np.where(inside, total, 0.0)

    def color(self, x: npt.ArrayLike, d: npt.ArrayLike) -> Array:
        """RGB in [0, 1] at points x seen along unit directions d."""
        p = np.asarray(x, dtype=np.float64)
        dirs = np.broadcast_to(np.asarray(d, dtype=np.float64), p.shape)
        if not self.primitives:
            return np.broadcast_to(np.asarray(self.empty_color), p.shape).copy()
        if len(self.primitives) == 1:
            return self.primitives[0].color(p, dirs)
        weights = np.stack([prim.density(p) for prim in self.primitives], axis=-1)
        colors = np.stack([prim.color(p, dirs) for prim in self.primitives], axis=-2)
        norm = weights.sum(axis=-1, keepdims=True)
        mixed = np.einsum("...k,...kc->...c", weights, colors) / np.maximum(norm, 1e-300)
        fallback = colors.mean(axis=-2)
        return np.clip(np.where(norm > 0.0, mixed, fallback), 0.0, 1.0)


def sphere_scene() -> AnalyticField:
    """Unit soft sphere with a view-dependent tint."""
    return AnalyticField(
        name="sphere",
        primitives=(SoftSphere(albedo=(0.8, 0.35, 0.2), tint=(0.15, 0.1, 0.25), radius=1.0),),
    )


def empty_scene() -> AnalyticField:
    return AnalyticField(name="empty")


def boxes_scene() -> AnalyticField:
    """Two soft boxes and a textured sphere."""
    return AnalyticField(
        name="boxes",
        primitives=(
            SoftBox(center=(-0.55, -0.3, -0.3), half_extent=(0.35, 0.35, 0.35), albedo=(0.2, 0.6, 0.3), tint=(0.1, 0.1, 0.1)),
            SoftBox(center=(0.5, 0.45, -0.45), half_extent=(0.3, 0.2, 0.25), albedo=(0.25, 0.3, 0.8)),
            SoftSphere(center=(0.2, -0.2, 0.35), radius=0.45, albedo=(0.85, 0.75, 0.3), texture=0.15),
        ),
    )


SCENES: dict[str, Callable[[], AnalyticField]] = {
    "sphere": sphere_scene,
    "empty": empty_scene,
    "boxes": boxes_scene,
}


def get_scene(name: str) -> AnalyticField:
    """Built-in analytic scene by name."""
    try:
        return SCENES[name]()
    except KeyError:
        raise UsageError(f"unknown scene '{name}' (choose from {', '.join(sorted(SCENES))})") from None
