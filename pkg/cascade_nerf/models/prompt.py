"""Prompt bank data models."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Self

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, Field, model_validator

from .scene import Split


class PromptSourceKind(str, Enum):
    """Where a bank's images come from."""

    RENDERED = "rendered"
    GROUND_TRUTH = "ground_truth"
    GAUSSIAN_NOISE = "gaussian_noise"


class PromptSource(BaseModel):
    """Recipe for a prompt bank."""

    kind: PromptSourceKind = Field(default=PromptSourceKind.RENDERED)
    checkpoint: str | None = Field(default=None, description="Checkpoint reference for rendered banks")
    mean: float = Field(default=0.5)
    stddev: float = Field(default=0.25, gt=0.0)
    seed: int = Field(default=0)

    @model_validator(mode="after")
    def _check_finite(self) -> Self:
        if not (np.isfinite(self.mean) and np.isfinite(self.stddev)):
            raise ValueError("noise parameters must be finite")
        return self


@dataclass
class PromptBank:
    """Per-view RGB prompt images aligned pixel-for-pixel with the dataset."""

    stage: int | None
    source: PromptSourceKind
    images: dict[str, npt.NDArray[np.float64]]
    splits: dict[Split, list[str]]
    checkpoint_hash: str | None = None
    resolution: tuple[int, int] = field(default=(0, 0))

    @property
    def tag(self) -> str:
        """Directory-friendly label: stage index for rendered banks, source name otherwise."""
        if self.source is PromptSourceKind.RENDERED and self.stage is not None:
            return f"stage_{self.stage}"
        return self.source.value

    @property
    def view_ids(self) -> list[str]:
        return [view_id for ids in self.splits.values() for view_id in ids]


class BankViewEntry(BaseModel):
    """One image of a saved bank."""

    id: str
    split: Split
    sha256: str


class BankManifest(BaseModel):
    """Contents of a bank's manifest.json."""

    stage: int | None
    source: PromptSourceKind
    checkpoint_hash: str | None
    width: int
    height: int
    views: list[BankViewEntry]
