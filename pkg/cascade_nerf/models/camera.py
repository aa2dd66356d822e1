"""Camera intrinsics and ray data models."""

import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field

from ..errors import UsageError


class CameraIntrinsics(BaseModel):
    """Pinhole camera with square pixels and a horizontal field of view."""

    model_config = ConfigDict(frozen=True)

    width: int = Field(..., ge=1, description="Image width in pixels")
    height: int = Field(..., ge=1, description="Image height in pixels")
    fov_x: float = Field(..., gt=0.0, lt=math.pi, description="Horizontal field of view (radians)")

    @property
    def focal(self) -> float:
        """Focal length in pixels."""
        return self.width / (2.0 * math.tan(self.fov_x / 2.0))

    @property
    def pixel_count(self) -> int:
        """Number of pixels in one image."""
        return self.width * self.height


@dataclass(frozen=True)
class Ray:
    """A world-space ray with its sampling bounds."""

    origin: npt.NDArray[np.float64]
    direction: npt.NDArray[np.float64]
    t_near: float
    t_far: float

    def __post_init__(self) -> None:
        norm = float(np.linalg.norm(self.direction))
        if abs(norm - 1.0) > 1e-9:
            raise UsageError(f"ray direction must be unit length, got norm {norm}")
        if not self.t_near < self.t_far:
            raise UsageError(f"ray bounds must satisfy t_near < t_far, got ({self.t_near}, {self.t_far})")

    def at(self, t: float) -> npt.NDArray[np.float64]:
        """Point along the ray at distance t."""
        return self.origin + t * self.direction
