"""Data models for cascade_nerf."""

from .camera import CameraIntrinsics, Ray
from .field import ARCH_PRESETS, EncodingConfig, FieldArch, PromptSite, RadianceOutput
from .metrics import MetricReport, ViewMetrics
from .prompt import BankManifest, BankViewEntry, PromptBank, PromptSource, PromptSourceKind
from .render import RenderConfig, RenderResult
from .scene import ALL_SPLITS, SceneDataset, SceneMeta, SceneSpec, Split, View
from .training import (
    CascadeConfig,
    CascadeState,
    IterationRecord,
    StageLog,
    StageMetrics,
    StageRecord,
    StopReason,
    TrainConfig,
    ValidationRecord,
    WarmStart,
)

__all__ = [
    "ALL_SPLITS",
    "ARCH_PRESETS",
    "BankManifest",
    "BankViewEntry",
    "CameraIntrinsics",
    "CascadeConfig",
    "CascadeState",
    "EncodingConfig",
    "FieldArch",
    "IterationRecord",
    "MetricReport",
    "PromptBank",
    "PromptSite",
    "PromptSource",
    "PromptSourceKind",
    "RadianceOutput",
    "Ray",
    "RenderConfig",
    "RenderResult",
    "SceneDataset",
    "SceneMeta",
    "SceneSpec",
    "Split",
    "StageLog",
    "StageMetrics",
    "StageRecord",
    "StopReason",
    "TrainConfig",
    "ValidationRecord",
    "View",
    "ViewMetrics",
    "WarmStart",
]
