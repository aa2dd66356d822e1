"""Scene dataset data models."""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, Field

from ..errors import UsageError
from .camera import CameraIntrinsics


class Split(str, Enum):
    """Dataset split names."""

    TRAIN = "train"
    VAL = "val"
    TEST = "test"


ALL_SPLITS: tuple[Split, ...] = (Split.TRAIN, Split.VAL, Split.TEST)


@dataclass
class View:
    """One posed image of the scene."""

    id: str
    pose: npt.NDArray[np.float64]
    image: npt.NDArray[np.float64]
    depth: npt.NDArray[np.float64] | None = None


@dataclass
class SceneDataset:
    """Camera intrinsics, posed views and their split assignment."""

    intrinsics: CameraIntrinsics
    views: list[View]
    splits: dict[Split, list[str]]
    bounds: tuple[float, float]
    scene_bound: float = 1.5
    name: str = ""
    seed: int | None = None
    _index: dict[str, View] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self) -> None:
        t_near, t_far = self.bounds
        if not 0.0 < t_near < t_far:
            raise UsageError(f"scene bounds must satisfy 0 < t_near < t_far, got {self.bounds}")
        self._index = {view.id: view for view in self.views}
        seen: dict[str, Split] = {}
        for split, ids in self.splits.items():
            for view_id in ids:
                if view_id in seen:
                    raise UsageError(f"view '{view_id}' appears in splits {seen[view_id].value} and {split.value}")
                if view_id not in self._index:
                    raise UsageError(f"split {split.value} names unknown view '{view_id}'")
                seen[view_id] = split
        missing = set(self._index) - set(seen)
        if missing:
            raise UsageError(f"views without a split: {sorted(missing)}")
        shape = (self.intrinsics.height, self.intrinsics.width, 3)
        for view in self.views:
            if view.image.shape != shape:
                raise UsageError(f"view '{view.id}' has image shape {view.image.shape}, expected {shape}")

    @property
    def t_near(self) -> float:
        return self.bounds[0]

    @property
    def t_far(self) -> float:
        return self.bounds[1]

    def view(self, view_id: str) -> View:
        """Look up a view by id."""
        try:
            return self._index[view_id]
        except KeyError:
            raise UsageError(f"unknown view '{view_id}'") from None

    def views_in(self, split: Split) -> list[View]:
        """Views of one split in their recorded order."""
        return [self._index[view_id] for view_id in self.splits.get(split, [])]

    def split_of(self, view_id: str) -> Split:
        """The split a view belongs to."""
        for split, ids in self.splits.items():
            if view_id in ids:
                return split
        raise UsageError(f"unknown view '{view_id}'")

    def gt_depth_mask(self, view: View) -> npt.NDArray[np.bool_] | None:
        """Valid ground-truth depth pixels: empty rays are stored as exactly t_far."""
        if view.depth is None:
            return None
        return np.asarray(view.depth < self.t_far, dtype=bool)


class SceneSpec(BaseModel):
    """Parameters of a procedurally generated scene."""

    scene: str = Field(..., description="Built-in analytic scene name")
    train_views: int = Field(default=10, ge=1)
    val_views: int = Field(default=3, ge=1)
    test_views: int = Field(default=3, ge=1)
    resolution: int = Field(default=32, ge=8, description="Square image side in pixels")
    seed: int = Field(default=0)
    fov_x: float = Field(default=0.6981317007977318, gt=0.0, description="Horizontal FoV (40 degrees)")
    camera_radius: float = Field(default=4.0, gt=0.0)
    t_near: float = Field(default=2.0, gt=0.0)
    t_far: float = Field(default=6.0, gt=0.0)
    quadrature_n: int = Field(default=1024, ge=256)

    @property
    def counts(self) -> dict[Split, int]:
        return {Split.TRAIN: self.train_views, Split.VAL: self.val_views, Split.TEST: self.test_views}


class SceneMeta(BaseModel):
    """Contents of scene.meta.json."""

    scene: str
    width: int
    height: int
    t_near: float
    t_far: float
    scene_bound: float
    seed: int | None = None
    quadrature_n: int | None = None
