"""Tests for configuration management."""

import os
import tempfile
from collections.abc import Iterator
from pathlib import Path
from unittest.mock import patch

import pytest
from pydantic import ValidationError

import cascade_nerf.config as config_module
from cascade_nerf.config import (
    RunConfig,
    Settings,
    get_settings,
    load_run_config,
    parse_assignment,
    parse_value,
    read_config_file,
)
from cascade_nerf.errors import ConfigError
from cascade_nerf.models.field import PromptSite
from cascade_nerf.models.training import CascadeConfig, TrainConfig, WarmStart


@pytest.fixture(autouse=True)
def fresh_settings() -> Iterator[None]:
    config_module._settings = None
    yield
    config_module._settings = None


class TestSettings:
    """Test Settings configuration."""

    def test_default_settings(self) -> None:
        """Test default configuration values."""
        # Temporarily change to a directory without .env file
        with tempfile.TemporaryDirectory() as temp_dir:
            original_cwd = os.getcwd()
            try:
                os.chdir(temp_dir)
                with patch.dict(os.environ, {}, clear=True):
                    settings = Settings()

                    assert settings.workers == 1
                    assert settings.log_level == "INFO"
                    assert settings.otel_service_name == "cascade-nerf"
                    assert settings.otel_traces_exporter == "none"
                    assert settings.debug is False
                    assert settings.environment == "development"
            finally:
                os.chdir(original_cwd)

    def test_environment_override(self) -> None:
        """Test environment variable overrides."""
        env_vars = {
            "CASCADE_NERF_WORKERS": "4",
            "CASCADE_NERF_LOG_LEVEL": "DEBUG",
            "CASCADE_NERF_DEBUG": "true",
            "CASCADE_NERF_ENVIRONMENT": "production",
        }

        with patch.dict(os.environ, env_vars, clear=True):
            settings = Settings()

            assert settings.workers == 4
            assert settings.log_level == "DEBUG"
            assert settings.debug is True
            assert settings.environment == "production"

    def test_unprefixed_variables_are_ignored(self) -> None:
        """Only CASCADE_NERF_ variables configure the process."""
        with patch.dict(os.environ, {"WORKERS": "8", "LOG_LEVEL": "ERROR"}, clear=True):
            settings = Settings()

            assert settings.workers == 1
            assert settings.log_level == "INFO"

    def test_invalid_workers(self) -> None:
        """Worker counts must be positive."""
        with patch.dict(os.environ, {"CASCADE_NERF_WORKERS": "0"}, clear=True):
            with pytest.raises(ValidationError):
                Settings()

    def test_get_settings_singleton(self) -> None:
        """Test that get_settings returns the same instance."""
        with patch.dict(os.environ, {}, clear=True):
            settings1 = get_settings()
            settings2 = get_settings()

            assert settings1 is settings2


class TestAssignments:
    """Parsing 'key = value' lines."""

    @pytest.mark.parametrize(
        ("text", "expected"),
        [
            ("3", 3),
            (" 0.5 ", 0.5),
            ("true", True),
            ("null", None),
            ("[1, 2]", [1, 2]),
            ('"quoted"', "quoted"),
            ("direction", "direction"),
        ],
    )
    def test_parse_value(self, text: str, expected: object) -> None:
        """JSON literals parse; anything else stays a string."""
        assert parse_value(text) == expected

    def test_parse_assignment(self) -> None:
        """Keys are stripped and values parsed."""
        assert parse_assignment(" train.iterations = 200 ") == ("train.iterations", 200)
        assert parse_assignment("cascade.prompt_site=position") == ("cascade.prompt_site", "position")

    def test_missing_equals(self) -> None:
        """A line without '=' is rejected."""
        with pytest.raises(ConfigError, match="key = value"):
            parse_assignment("train.iterations 200")

    def test_empty_key(self) -> None:
        """A bare '= value' is rejected."""
        with pytest.raises(ConfigError, match="empty key"):
            parse_assignment(" = 4")

    def test_config_file_comments(self, tmp_path: Path) -> None:
        """Blank lines and '#' lines are skipped."""
        path = tmp_path / "run.conf"
        path.write_text("# tiny run\n\nseed = 7\n  # indented comment\ntrain.batch_rays = 128\n", encoding="utf-8")
        assert read_config_file(path) == [("seed", 7), ("train.batch_rays", 128)]

    def test_unreadable_config_file(self, tmp_path: Path) -> None:
        """A missing config file is a configuration error."""
        with pytest.raises(ConfigError, match="cannot read"):
            read_config_file(tmp_path / "absent.conf")


class TestLoadRunConfig:
    """Merging defaults, file and flags."""

    def test_defaults(self) -> None:
        """Without input the defaults come back."""
        assert load_run_config() == RunConfig()

    def test_file_then_overrides(self, tmp_path: Path) -> None:
        """Flags win over the config file."""
        path = tmp_path / "run.conf"
        path.write_text("seed = 7\ntrain.iterations = 50\narch.trunk_width = 32\n", encoding="utf-8")
        config = load_run_config(path, ["train.iterations=20", "cascade.warm_start=all"])
        assert config.seed == 7
        assert config.train.iterations == 20
        assert config.arch.trunk_width == 32
        assert config.cascade.warm_start is WarmStart.ALL

    def test_nested_sections(self) -> None:
        """Dotted keys reach nested models."""
        config = load_run_config(overrides=["train.render.n_coarse=16", "arch.pos_encoding.n_freqs=6"])
        assert config.train.render.n_coarse == 16
        assert config.arch.pos_encoding.n_freqs == 6

    def test_base_is_kept(self) -> None:
        """Overrides apply on top of a given base config."""
        base = RunConfig(seed=11, train=TrainConfig(iterations=9))
        config = load_run_config(overrides=["workers=2"], base=base)
        assert (config.seed, config.train.iterations, config.workers) == (11, 9, 2)

    def test_stage_overrides(self) -> None:
        """stage_overrides accepts arbitrary per-stage training fields."""
        config = load_run_config(overrides=["cascade.stage_overrides.2.iterations=10"])
        assert config.cascade.stage_overrides == {2: {"iterations": 10}}

    def test_misspelled_stage_override(self) -> None:
        """Per-stage overrides only take training fields."""
        with pytest.raises(ConfigError, match="itrations"):
            load_run_config(overrides=["cascade.stage_overrides.2.itrations=5"])

    def test_misspelled_render_key(self) -> None:
        """Unknown keys inside a nested render override are rejected."""
        with pytest.raises(ConfigError):
            load_run_config(overrides=['cascade.stage_overrides.1.render={"n_corse": 4}'])

    def test_unknown_key(self) -> None:
        """Misspelled keys are named in the error."""
        with pytest.raises(ConfigError, match="train.iteratons"):
            load_run_config(overrides=["train.iteratons=5"])

    def test_leaf_is_not_a_section(self) -> None:
        """A scalar cannot be indexed like a section."""
        with pytest.raises(ConfigError):
            load_run_config(overrides=["seed.value=1"])

    def test_invalid_value_reports_location(self) -> None:
        """Validation failures name the offending field."""
        with pytest.raises(ConfigError, match="train.iterations"):
            load_run_config(overrides=["train.iterations=0"])

    def test_unprompted_cascade_is_rejected(self) -> None:
        """The cascade needs a real prompt site."""
        with pytest.raises(ConfigError, match="prompt_site"):
            load_run_config(overrides=["cascade.prompt_site=none"])


class TestCascadeConfig:
    """Per-stage settings derived from the cascade config."""

    def test_prompt_site_none(self) -> None:
        """Constructing with no prompt site fails validation."""
        with pytest.raises(ValidationError):
            CascadeConfig(prompt_site=PromptSite.NONE)

    @pytest.mark.parametrize(
        ("mode", "expected"),
        [
            (WarmStart.NONE, [False, False, False, False]),
            (WarmStart.AFTER_FIRST, [False, False, True, True]),
            (WarmStart.ALL, [False, True, True, True]),
        ],
    )
    def test_warm_starts(self, mode: WarmStart, expected: list[bool]) -> None:
        """Stage 0 is always cold; later stages follow the mode."""
        cfg = CascadeConfig(warm_start=mode)
        assert [cfg.warm_starts(stage) for stage in range(4)] == expected

    def test_iteration_decay(self) -> None:
        """Iterations shrink geometrically per stage and never reach zero."""
        cfg = CascadeConfig(iteration_decay=0.5)
        base = TrainConfig(iterations=100)
        assert [cfg.train_config_for(base, s).iterations for s in range(4)] == [100, 50, 25, 12]
        assert cfg.train_config_for(TrainConfig(iterations=1), 5).iterations == 1

    def test_overrides_win(self) -> None:
        """Explicit overrides replace the decayed values for their stage only."""
        cfg = CascadeConfig(iteration_decay=0.5, stage_overrides={1: {"iterations": 7, "learning_rate": 1e-4}})
        base = TrainConfig(iterations=100)
        stage1 = cfg.train_config_for(base, 1)
        assert stage1.iterations == 7
        assert stage1.learning_rate == 1e-4
        assert cfg.train_config_for(base, 2).learning_rate == base.learning_rate

    def test_override_is_validated(self) -> None:
        """Invalid override values fail like any other config."""
        with pytest.raises(ValidationError, match=r"stage_overrides\.1\.iterations"):
            CascadeConfig(stage_overrides={1: {"iterations": -3}})

    def test_unknown_override_key(self) -> None:
        """A typo in an override fails when the cascade config is built."""
        with pytest.raises(ValidationError, match="itrations"):
            CascadeConfig(stage_overrides={2: {"itrations": 5}})

    def test_train_config_forbids_extra(self) -> None:
        """Training and render settings reject unknown fields."""
        with pytest.raises(ValidationError):
            TrainConfig.model_validate({"iterations": 5, "itrations": 5})
        with pytest.raises(ValidationError):
            TrainConfig.model_validate({"render": {"n_corse": 4}})
