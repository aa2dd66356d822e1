"""Tests for the cascade stage loop and resumption."""

import csv
import json
from pathlib import Path
from typing import Any

import pytest

from cascade_nerf.config import RunConfig
from cascade_nerf.errors import IntegrityError, UsageError
from cascade_nerf.field.checkpoint import load_checkpoint
from cascade_nerf.models.field import FieldArch
from cascade_nerf.models.prompt import PromptSourceKind
from cascade_nerf.models.scene import SceneDataset, Split
from cascade_nerf.models.training import CascadeConfig, CascadeState, StopReason, TrainConfig, WarmStart
from cascade_nerf.training import resume_cascade, run_cascade
from cascade_nerf.training.cascade import STATE_FILE, TRANSDUCTIVE_NOTE


@pytest.fixture
def make_config(tiny_arch: FieldArch, tiny_train: TrainConfig) -> Any:
    def build(workers: int = 1, **cascade: Any) -> RunConfig:
        return RunConfig(
            seed=3,
            workers=workers,
            arch=tiny_arch,
            train=tiny_train,
            cascade=CascadeConfig(iteration_decay=1.0, **cascade),
        )

    return build


def _csv_rows(path: Path) -> list[dict[str, str]]:
    with path.open(encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def _stable_columns(path: Path) -> list[dict[str, str]]:
    return [{k: v for k, v in row.items() if k != "wall_time"} for row in _csv_rows(path)]


class TestRunCascade:
    """Running the stage loop from scratch."""

    def test_single_stage(self, dataset: SceneDataset, scene_dir: Path, make_config: Any, tmp_path: Path) -> None:
        """max_stages = 1 trains only the unprompted stage and writes every artifact."""
        run = tmp_path / "run"
        state = run_cascade(dataset, make_config(max_stages=1), run, scene_dir)

        assert state.completed == 1
        assert state.stop_reason is StopReason.MAX_STAGES
        record = state.stages[0]
        assert record.input_bank is None
        assert record.metrics.bank_distance is None
        for name in ("run.json", STATE_FILE, "metrics.csv", "metrics_views.csv"):
            assert (run / name).is_file()
        for name in ("checkpoint", "log.jsonl", "metrics.json"):
            assert (run / "stage_0" / name).is_file()
        assert (run / "prompts" / "stage_0" / "manifest.json").is_file()
        assert not load_checkpoint(run / record.checkpoint).prompted

        rows = _csv_rows(run / "metrics.csv")
        assert list(rows[0]) == ["stage", "psnr", "ssim", "depth_mse", "wall_time"]
        assert rows[0]["stage"] == "0"
        assert float(rows[0]["psnr"]) == record.metrics.psnr
        views = _csv_rows(run / "metrics_views.csv")
        assert [(r["split"], r["view_id"]) for r in views] == [("val", "val_000"), ("test", "test_000")]

    def test_run_manifest(self, dataset: SceneDataset, scene_dir: Path, make_config: Any, tmp_path: Path) -> None:
        """run.json records the effective config, dataset and protocol note."""
        run_cascade(dataset, make_config(max_stages=1), tmp_path / "run", scene_dir)
        manifest = json.loads((tmp_path / "run" / "run.json").read_text(encoding="utf-8"))
        assert manifest["config"]["seed"] == 3
        assert manifest["config"]["cascade"]["max_stages"] == 1
        assert manifest["dataset_path"] == str(scene_dir.resolve())
        assert manifest["protocol"] == TRANSDUCTIVE_NOTE

    def test_threshold_stops_after_first_comparison(
        self, dataset: SceneDataset, scene_dir: Path, make_config: Any, tmp_path: Path
    ) -> None:
        """Bank distances never exceed one, so a threshold of 1 stops at stage 1."""
        state = run_cascade(dataset, make_config(max_stages=5, stop_threshold=1.0), tmp_path / "run", scene_dir)
        assert state.completed == 2
        assert state.stop_reason is StopReason.THRESHOLD
        distance = state.stages[1].metrics.bank_distance
        assert distance is not None and 0.0 <= distance <= 1.0
        assert state.stages[1].input_bank == "prompts/stage_0"

    def test_warm_start_and_prompting(
        self, dataset: SceneDataset, scene_dir: Path, make_config: Any, tmp_path: Path
    ) -> None:
        """Stages after the first are prompted; warm starts begin at stage 2 by default."""
        run = tmp_path / "run"
        state = run_cascade(dataset, make_config(max_stages=3, stop_threshold=0.0), run, scene_dir)
        assert state.completed == 3
        assert state.stop_reason is StopReason.MAX_STAGES
        ckpts = [load_checkpoint(run / record.checkpoint) for record in state.stages]
        assert [c.prompted for c in ckpts] == [False, True, True]
        assert [c.metadata["warm_start"] for c in ckpts] == [False, False, True]
        assert ckpts[2].metadata["input_bank"] == "prompts/stage_1"
        assert ckpts[2].metadata["input_bank_checkpoint"] == state.stages[1].checkpoint_hash
        assert len(state.bank_distances) == 2

    def test_stage_overrides(self, dataset: SceneDataset, scene_dir: Path, make_config: Any, tmp_path: Path) -> None:
        """Per-stage overrides replace the stage's training settings."""
        config = make_config(max_stages=2, stop_threshold=0.0, stage_overrides={1: {"iterations": 2}})
        state = run_cascade(dataset, config, tmp_path / "run", scene_dir)
        assert [s.metrics.iterations for s in state.stages] == [3, 2]

    def test_fixed_prompt_source(self, dataset: SceneDataset, scene_dir: Path, make_config: Any, tmp_path: Path) -> None:
        """A ground-truth prompt source runs one prompted stage on a fixed bank."""
        run = tmp_path / "run"
        state = run_cascade(dataset, make_config(prompt_source=PromptSourceKind.GROUND_TRUTH), run, scene_dir)
        assert state.completed == 2
        assert state.stop_reason is StopReason.FIXED_PROMPT
        assert state.stages[1].input_bank == "prompts/ground_truth"
        assert state.stages[1].metrics.bank_distance is None
        assert (run / "prompts" / "ground_truth" / "manifest.json").is_file()

    def test_worker_count_does_not_change_results(
        self, dataset: SceneDataset, scene_dir: Path, make_config: Any, tmp_path: Path
    ) -> None:
        """Checkpoints and metrics are identical for 1 and 3 workers."""
        states = [
            run_cascade(dataset, make_config(workers=w, max_stages=2, stop_threshold=0.0), tmp_path / f"w{w}", scene_dir)
            for w in (1, 3)
        ]
        assert [s.checkpoint_hash for s in states[0].stages] == [s.checkpoint_hash for s in states[1].stages]
        assert _stable_columns(tmp_path / "w1" / "metrics.csv") == _stable_columns(tmp_path / "w3" / "metrics.csv")

    def test_existing_run_is_not_overwritten(
        self, dataset: SceneDataset, scene_dir: Path, make_config: Any, tmp_path: Path
    ) -> None:
        """Starting over an existing run directory is refused."""
        run_cascade(dataset, make_config(max_stages=1), tmp_path / "run", scene_dir)
        with pytest.raises(UsageError, match="resume"):
            run_cascade(dataset, make_config(max_stages=1), tmp_path / "run", scene_dir)

    def test_bank_splits_must_cover_training(self, dataset: SceneDataset, make_config: Any, tmp_path: Path) -> None:
        """Banks must include the train and val views."""
        with pytest.raises(UsageError, match="bank_splits"):
            run_cascade(dataset, make_config(bank_splits=[Split.TRAIN]), tmp_path / "run")


class TestResumeCascade:
    """Continuing an interrupted run."""

    def test_resume_matches_uninterrupted(
        self, dataset: SceneDataset, scene_dir: Path, make_config: Any, tmp_path: Path
    ) -> None:
        """Dropping the last stage and resuming reproduces the same checkpoints and metrics."""
        config = make_config(max_stages=3, stop_threshold=0.0, warm_start=WarmStart.AFTER_FIRST)
        full = run_cascade(dataset, config, tmp_path / "full", scene_dir)
        partial_dir = tmp_path / "partial"
        run_cascade(dataset, config, partial_dir, scene_dir)

        state = CascadeState.load(partial_dir / STATE_FILE)
        state.stages = state.stages[:1]
        state.stop_reason = None
        state.save(partial_dir / STATE_FILE)

        resumed = resume_cascade(partial_dir)
        assert resumed.stop_reason is StopReason.MAX_STAGES
        assert [s.checkpoint_hash for s in resumed.stages] == [s.checkpoint_hash for s in full.stages]
        assert _stable_columns(partial_dir / "metrics.csv") == _stable_columns(tmp_path / "full" / "metrics.csv")

    def test_finished_run_is_unchanged(self, dataset: SceneDataset, scene_dir: Path, make_config: Any, tmp_path: Path) -> None:
        """Resuming a finished run does nothing."""
        run = tmp_path / "run"
        state = run_cascade(dataset, make_config(max_stages=1), run, scene_dir)
        before = (run / STATE_FILE).read_bytes()
        again = resume_cascade(run)
        assert again.completed == state.completed
        assert (run / STATE_FILE).read_bytes() == before

    def test_tampered_checkpoint(self, dataset: SceneDataset, scene_dir: Path, make_config: Any, tmp_path: Path) -> None:
        """A checkpoint that no longer matches its recorded hash blocks resumption."""
        run = tmp_path / "run"
        run_cascade(dataset, make_config(max_stages=1), run, scene_dir)
        path = run / "stage_0" / "checkpoint"
        path.write_bytes(path.read_bytes() + b"\0")
        with pytest.raises(IntegrityError, match="hash"):
            resume_cascade(run)

    def test_in_memory_dataset_cannot_resume(self, dataset: SceneDataset, make_config: Any, tmp_path: Path) -> None:
        """Runs started without a dataset path cannot be resumed."""
        run = tmp_path / "run"
        run_cascade(dataset, make_config(max_stages=2, stop_threshold=0.0), run)
        state = CascadeState.load(run / STATE_FILE)
        state.stages = state.stages[:1]
        state.stop_reason = None
        state.save(run / STATE_FILE)
        with pytest.raises(IntegrityError, match="in-memory"):
            resume_cascade(run)

    def test_missing_run(self, tmp_path: Path) -> None:
        """A directory without run files is an integrity failure."""
        with pytest.raises(IntegrityError, match="cannot read"):
            resume_cascade(tmp_path)
