"""Training and cascade data models."""

import json
from enum import Enum
from pathlib import Path
from typing import Any, Literal, Self

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .field import PromptSite
from .prompt import PromptSourceKind
from .render import RenderConfig
from .scene import ALL_SPLITS, Split


class TrainConfig(BaseModel):
    """Hyperparameters of one training stage."""

    model_config = ConfigDict(extra="forbid")

    iterations: int = Field(default=20000, ge=1)
    batch_rays: int = Field(default=1024, ge=1)
    learning_rate: float = Field(default=5e-4, gt=0.0)
    lr_decay_factor: float = Field(default=0.1, gt=0.0, description="LR multiplier reached at the horizon")
    lr_decay_iterations: int | None = Field(default=None, ge=1, description="Decay horizon (defaults to iterations)")
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(default=1e-8, gt=0.0)
    seed: int = Field(default=0)
    validate_every: int = Field(default=1000, ge=0, description="Validation cadence in iterations (0 = end only)")
    log_every: int = Field(default=100, ge=1)
    render: RenderConfig = Field(default_factory=RenderConfig)

    def learning_rate_at(self, iteration: int) -> float:
        """Exponentially decayed learning rate for a 0-based iteration."""
        horizon = self.lr_decay_iterations or self.iterations
        return self.learning_rate * self.lr_decay_factor ** (iteration / horizon)


class IterationRecord(BaseModel):
    kind: Literal["iteration"] = "iteration"
    iteration: int
    loss: float
    learning_rate: float
    elapsed: float


class ValidationRecord(BaseModel):
    kind: Literal["validation"] = "validation"
    iteration: int
    psnr: float
    ssim: float
    elapsed: float


class StageSummary(BaseModel):
    kind: Literal["summary"] = "summary"
    stage: int
    iterations: int
    wall_time: float
    seconds_per_iteration: float
    checkpoint: str | None = None


class StageLog(BaseModel):
    """Everything recorded while training one stage."""

    stage: int = 0
    iterations: list[IterationRecord] = Field(default_factory=list)
    validations: list[ValidationRecord] = Field(default_factory=list)
    wall_time: float = 0.0
    checkpoint: str | None = None

    @property
    def losses(self) -> list[float]:
        return [record.loss for record in self.iterations]

    @property
    def final_validation(self) -> ValidationRecord | None:
        return self.validations[-1] if self.validations else None

    def summary(self) -> StageSummary:
        count = len(self.iterations)
        return StageSummary(
            stage=self.stage,
            iterations=count,
            wall_time=self.wall_time,
            seconds_per_iteration=self.wall_time / count if count else 0.0,
            checkpoint=self.checkpoint,
        )

    def write_jsonl(self, path: Path) -> None:
        """Write one JSON record per line in time order, closing with the summary."""
        timed: list[IterationRecord | ValidationRecord] = [*self.iterations, *self.validations]
        timed.sort(key=lambda record: record.elapsed)
        records: list[BaseModel] = [*timed, self.summary()]
        with path.open("w", encoding="utf-8") as handle:
            for record in records:
                handle.write(record.model_dump_json() + "\n")

    @classmethod
    def read_jsonl(cls, path: Path) -> "StageLog":
        log = cls()
        with path.open(encoding="utf-8") as handle:
            for line in handle:
                data: dict[str, Any] = json.loads(line)
                kind = data.get("kind")
                if kind == "iteration":
                    log.iterations.append(IterationRecord.model_validate(data))
                elif kind == "validation":
                    log.validations.append(ValidationRecord.model_validate(data))
                elif kind == "summary":
                    summary = StageSummary.model_validate(data)
                    log.stage = summary.stage
                    log.wall_time = summary.wall_time
                    log.checkpoint = summary.checkpoint
        return log


class WarmStart(str, Enum):
    """Which cascade stages start from the previous stage's weights."""

    NONE = "none"
    AFTER_FIRST = "after_first"
    ALL = "all"


class StopReason(str, Enum):
    THRESHOLD = "threshold"
    MAX_STAGES = "max_stages"
    FIXED_PROMPT = "fixed_prompt"


class CascadeConfig(BaseModel):
    """Stage loop settings."""

    max_stages: int = Field(default=6, ge=1, description="Stage count including stage 0")
    stop_threshold: float = Field(default=0.002, ge=0.0, description="Bank distance that ends the loop")
    warm_start: WarmStart = Field(default=WarmStart.AFTER_FIRST)
    prompt_site: PromptSite = Field(default=PromptSite.DIRECTION)
    prompt_source: PromptSourceKind = Field(default=PromptSourceKind.RENDERED)
    noise_mean: float = Field(default=0.5)
    noise_stddev: float = Field(default=0.25, gt=0.0)
    iteration_decay: float = Field(default=0.75, gt=0.0, le=1.0, description="Per-stage iteration multiplier")
    stage_overrides: dict[int, dict[str, Any]] = Field(default_factory=dict)
    bank_splits: list[Split] = Field(default_factory=lambda: list(ALL_SPLITS))

    @model_validator(mode="after")
    def _check_site(self) -> Self:
        if self.prompt_site is PromptSite.NONE:
            raise ValueError("prompted stages need prompt_site 'direction' or 'position'")
        return self

    @model_validator(mode="after")
    def _check_overrides(self) -> Self:
        for stage, override in self.stage_overrides.items():
            try:
                TrainConfig.model_validate(override)
            except ValidationError as e:
                first = e.errors()[0]
                location = ".".join(str(part) for part in first["loc"])
                raise ValueError(f"stage_overrides.{stage}.{location}: {first['msg']}") from None
        return self

    def warm_starts(self, stage: int) -> bool:
        """Whether a prompted stage starts from the previous checkpoint."""
        if stage == 0 or self.warm_start is WarmStart.NONE:
            return False
        return self.warm_start is WarmStart.ALL or stage >= 2

    def train_config_for(self, base: TrainConfig, stage: int) -> TrainConfig:
        """Per-stage training settings: geometric iteration decay, then explicit overrides."""
        iterations = max(1, round(base.iterations * self.iteration_decay**stage))
        cfg = base.model_copy(update={"iterations": iterations})
        override = self.stage_overrides.get(stage)
        if override:
            cfg = TrainConfig.model_validate({**cfg.model_dump(), **override})
        return cfg


class StageMetrics(BaseModel):
    """Validation numbers of one stage (the per-stage table row)."""

    psnr: float
    ssim: float
    depth_mse: float | None = None
    wall_time: float
    iterations: int
    bank_distance: float | None = Field(default=None, description="Distance to the previous stage's bank")


class StageRecord(BaseModel):
    """Artifacts and metrics of a completed stage."""

    stage: int
    checkpoint: str
    checkpoint_hash: str
    input_bank: str | None = None
    output_bank: str
    metrics: StageMetrics


class CascadeState(BaseModel):
    """Progress of a cascade run; persisted after every stage."""

    dataset_hash: str
    stages: list[StageRecord] = Field(default_factory=list)
    stop_reason: StopReason | None = None

    @property
    def completed(self) -> int:
        return len(self.stages)

    @property
    def finished(self) -> bool:
        return self.stop_reason is not None

    @property
    def bank_distances(self) -> list[float]:
        return [s.metrics.bank_distance for s in self.stages if s.metrics.bank_distance is not None]

    def save(self, path: Path) -> None:
        path.write_text(self.model_dump_json(indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "CascadeState":
        return cls.model_validate_json(path.read_text(encoding="utf-8"))
