"""Volume rendering data models."""

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field


class RenderConfig(BaseModel):
    """Sampling settings for rendering rays."""

    model_config = ConfigDict(extra="forbid")

    n_coarse: int = Field(default=32, ge=2, description="Stratified samples per ray")
    n_fine: int = Field(default=32, ge=0, description="Importance samples per ray (0 disables)")
    perturb: bool = Field(default=True, description="Jitter stratified samples (training only)")
    white_background: bool = Field(default=True)
    chunk_rays: int = Field(default=256, ge=1, description="Rays per parallel work unit")


@dataclass
class RenderResult:
    """Composited output for a batch of rays (leading axes are ray axes)."""

    rgb: npt.NDArray[np.float64]
    depth: npt.NDArray[np.float64]
    weights: npt.NDArray[np.float64]
    t_final: npt.NDArray[np.float64]
    t_values: npt.NDArray[np.float64]

    @property
    def acc(self) -> npt.NDArray[np.float64]:
        """Accumulated opacity per ray."""
        return np.asarray(self.weights.sum(axis=-1))

    @property
    def valid(self) -> npt.NDArray[np.bool_]:
        """Rays whose expected depth is meaningful."""
        return np.asarray(self.acc >= 0.5)
