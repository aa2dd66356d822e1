"""Configuration management for cascade_nerf."""

import json
from collections.abc import Iterable
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import ConfigError
from .models.field import FieldArch
from .models.training import CascadeConfig, TrainConfig


class Settings(BaseSettings):
    """Process settings loaded from environment variables."""

    # Parallelism
    workers: int = Field(default=1, ge=1)

    # Observability Configuration
    log_level: str = Field(default="INFO")
    otel_service_name: str = Field(default="cascade-nerf")
    otel_traces_exporter: str = Field(default="none")  # none, console, otlp
    otel_exporter_otlp_endpoint: str = Field(default="")
    otel_exporter_otlp_headers: str = Field(default="")  # key=value,key2=value2

    # Application Configuration
    debug: bool = Field(default=False)
    environment: str = Field(default="development")

    model_config = SettingsConfigDict(
        env_prefix="CASCADE_NERF_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


# Global settings instance
_settings: Settings | None = None


def get_settings() -> Settings:
    """Get the global settings instance."""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


class RunConfig(BaseModel):
    """Effective configuration of one command: defaults < config file < flags."""

    model_config = ConfigDict(extra="forbid")

    seed: int = Field(default=0)
    workers: int = Field(default=1, ge=1)
    arch: FieldArch = Field(default_factory=FieldArch)
    train: TrainConfig = Field(default_factory=TrainConfig)
    cascade: CascadeConfig = Field(default_factory=CascadeConfig)

    def echo(self) -> dict[str, Any]:
        """JSON-ready form written into run.json."""
        return self.model_dump(mode="json")


def parse_value(text: str) -> Any:
    """JSON literal if it parses, otherwise the bare string."""
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_assignment(line: str) -> tuple[str, Any]:
    """Split 'dotted.key = value' into its key and parsed value."""
    if "=" not in line:
        raise ConfigError(line.strip(), "expected 'key = value'")
    key, value = line.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(line.strip(), "empty key")
    return key, parse_value(value)


def read_config_file(path: Path) -> list[tuple[str, Any]]:
    """Assignments of a plain-text config file; '#' starts a comment line."""
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ConfigError(str(path), f"cannot read config file: {e}") from e
    assignments = []
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        assignments.append(parse_assignment(line))
    return assignments


def _known_fields(model: type[BaseModel]) -> dict[str, Any]:
    return {name: info.annotation for name, info in model.model_fields.items()}


def _assign(tree: dict[str, Any], key: str, value: Any) -> None:
    model: type[BaseModel] | None = RunConfig
    node = tree
    parts = key.split(".")
    for depth, part in enumerate(parts):
        last = depth == len(parts) - 1
        if model is not None:
            fields = _known_fields(model)
            if part not in fields:
                raise ConfigError(key, "unknown key")
            annotation = fields[part]
            child = annotation if isinstance(annotation, type) and issubclass(annotation, BaseModel) else None
        else:
            child = None
        if last:
            node[part] = value
            return
        if model is not None and child is None:
            # free-form mapping such as cascade.stage_overrides.<stage>.<field>
            node = node.setdefault(part, {})
            model = None
            continue
        existing = node.setdefault(part, {})
        if not isinstance(existing, dict):
            raise ConfigError(key, f"'{part}' is not a section")
        node = existing
        model = child


def load_run_config(
    path: Path | None = None, overrides: Iterable[str] = (), base: RunConfig | None = None
) -> RunConfig:
    """Merge a config file and 'key=value' overrides onto the defaults."""
    tree: dict[str, Any] = base.model_dump() if base is not None else {}
    assignments: list[tuple[str, Any]] = []
    if path is not None:
        assignments.extend(read_config_file(path))
    assignments.extend(parse_assignment(item) for item in overrides)
    for key, value in assignments:
        _assign(tree, key, value)
    try:
        return RunConfig.model_validate(tree)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"]) or "<root>"
        raise ConfigError(location, first["msg"]) from e
