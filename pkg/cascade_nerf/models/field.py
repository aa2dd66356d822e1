"""Radiance-field architecture data models."""

from dataclasses import dataclass
from enum import Enum
from typing import Self

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, ConfigDict, Field, model_validator


class PromptSite(str, Enum):
    """Where the view prompt enters the network."""

    NONE = "none"
    DIRECTION = "direction"
    POSITION = "position"


class EncodingConfig(BaseModel):
    """Sinusoidal encoding with frequencies 2^0 ... 2^(N-1)."""

    model_config = ConfigDict(frozen=True)

    n_freqs: int = Field(..., ge=0, description="Number of frequency octaves N")
    include_input: bool = Field(default=False, description="Prepend the raw component")

    def width(self, dim: int) -> int:
        """Encoded length of a dim-component vector."""
        return dim * (2 * self.n_freqs + int(self.include_input))


class FieldArch(BaseModel):
    """Shape of the coarse (and optional fine) radiance-field MLP."""

    model_config = ConfigDict(frozen=True)

    trunk_depth: int = Field(default=4, ge=1)
    trunk_width: int = Field(default=64, ge=1)
    skip_at: int = Field(default=2, ge=0, description="Trunk layer receiving PE(x) again")
    dir_branch_width: int = Field(default=32, ge=1)
    prompt_site: PromptSite = Field(default=PromptSite.NONE)
    pos_encoding: EncodingConfig = Field(default_factory=lambda: EncodingConfig(n_freqs=10))
    dir_encoding: EncodingConfig = Field(default_factory=lambda: EncodingConfig(n_freqs=4))
    hierarchical: bool = Field(default=True, description="Separate coarse and fine networks")
    prompt_fine: bool = Field(default=True, description="Fine network also receives the prompt")
    scene_bound: float = Field(default=1.5, gt=0.0, description="Radius mapped onto [-1, 1]")

    @model_validator(mode="after")
    def _check_skip(self) -> Self:
        if self.skip_at >= self.trunk_depth:
            raise ValueError(f"skip_at ({self.skip_at}) must be below trunk_depth ({self.trunk_depth})")
        return self

    @property
    def prompt_dim(self) -> int:
        return 0 if self.prompt_site is PromptSite.NONE else 3

    @property
    def networks(self) -> tuple[str, ...]:
        return ("coarse", "fine") if self.hierarchical else ("coarse",)

    @property
    def prompted_networks(self) -> tuple[str, ...]:
        """Networks that read the prompt columns."""
        if self.prompt_site is PromptSite.NONE:
            return ()
        return self.networks if self.prompt_fine else ("coarse",)

    @property
    def pos_width(self) -> int:
        return self.pos_encoding.width(3)

    @property
    def dir_width(self) -> int:
        return self.dir_encoding.width(3)

    def with_prompt(self, site: PromptSite) -> "FieldArch":
        """Same architecture with a different prompt site."""
        return self.model_copy(update={"prompt_site": site})

    @classmethod
    def desk(cls) -> "FieldArch":
        """CPU-trainable default."""
        return cls()

    @classmethod
    def full(cls) -> "FieldArch":
        """The 8x256 lineage shape (about 1.19 M parameters for the coarse+fine pair)."""
        return cls(
            trunk_depth=8,
            trunk_width=256,
            skip_at=4,
            dir_branch_width=128,
            pos_encoding=EncodingConfig(n_freqs=10, include_input=True),
            dir_encoding=EncodingConfig(n_freqs=4, include_input=True),
        )


ARCH_PRESETS = {"desk": FieldArch.desk, "full": FieldArch.full}


@dataclass(frozen=True)
class RadianceOutput:
    """Color and density at one point."""

    color: npt.NDArray[np.float64]
    density: float
