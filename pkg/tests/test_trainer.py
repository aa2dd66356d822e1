"""Tests for single-stage training and split evaluation."""

import csv
from pathlib import Path

import numpy as np
import pytest

from cascade_nerf.errors import MissingPromptBankError, UsageError
from cascade_nerf.field.network import init_params
from cascade_nerf.models.field import FieldArch, PromptSite
from cascade_nerf.models.prompt import PromptSource, PromptSourceKind
from cascade_nerf.models.scene import ALL_SPLITS, SceneDataset, Split
from cascade_nerf.models.training import StageLog, TrainConfig
from cascade_nerf.prompts import synth_bank
from cascade_nerf.training import (
    RayBatcher,
    RayPool,
    complexity_report,
    evaluate_split,
    first_batch_loss,
    photometric_loss,
    score_view,
    train_stage,
    write_view_metrics,
)
from cascade_nerf.training.trainer import stage_init_seed


class TestBatching:
    """Ray pools and batch order."""

    def test_pool_covers_train_pixels(self, dataset: SceneDataset) -> None:
        """Every pixel of every training view is one ray with its color."""
        pool = RayPool.from_dataset(dataset, None)
        assert pool.size == 2 * 12 * 12
        assert pool.prompts is None
        np.testing.assert_array_equal(pool.targets[:144], dataset.view("train_000").image.reshape(-1, 3))
        np.testing.assert_allclose(np.linalg.norm(pool.directions, axis=-1), 1.0)

    def test_pool_carries_prompts(self, dataset: SceneDataset) -> None:
        """With a bank each ray carries its own view's prompt pixel."""
        bank = synth_bank(PromptSource(kind=PromptSourceKind.GROUND_TRUTH), dataset, ALL_SPLITS)
        pool = RayPool.from_dataset(dataset, bank)
        assert pool.prompts is not None
        np.testing.assert_array_equal(pool.prompts, pool.targets)

    def test_epoch_without_replacement(self) -> None:
        """Each epoch visits every ray once before any repeats."""
        batcher = RayBatcher(10, 4, seed=0, stage=0)
        drawn = np.concatenate([batcher.next_batch() for _ in range(5)])
        assert sorted(drawn[:10].tolist()) == list(range(10))
        assert sorted(drawn[10:20].tolist()) == list(range(10))

    def test_batches_are_reproducible(self) -> None:
        """Same seed and stage give the same sequence; another stage does not."""
        a = RayBatcher(50, 8, seed=1, stage=0).next_batch()
        b = RayBatcher(50, 8, seed=1, stage=0).next_batch()
        c = RayBatcher(50, 8, seed=1, stage=1).next_batch()
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_photometric_loss(self) -> None:
        """The loss is the mean squared color error."""
        assert photometric_loss([[0.0, 0.0, 0.0]], [[0.1, 0.2, 0.2]]) == pytest.approx(0.03)
        with pytest.raises(UsageError):
            photometric_loss(np.zeros((2, 3)), np.zeros((3, 3)))


class TestTrainStage:
    """Optimizing a field on the training split."""

    def test_loss_decreases(self, dataset: SceneDataset, tiny_arch: FieldArch, tiny_train: TrainConfig) -> None:
        """A few dozen Adam steps reduce the photometric loss."""
        cfg = tiny_train.model_copy(update={"iterations": 40, "batch_rays": 64, "learning_rate": 1e-2})
        _, log = train_stage(dataset, None, tiny_arch, cfg)
        losses = log.losses
        assert len(losses) == 40
        assert np.mean(losses[-5:]) < np.mean(losses[:5])
        assert log.final_validation is not None

    def test_deterministic_across_workers(self, dataset: SceneDataset, tiny_arch: FieldArch, tiny_train: TrainConfig) -> None:
        """Repeated runs and different worker counts give bit-identical parameters."""
        runs = [train_stage(dataset, None, tiny_arch, tiny_train, workers=w) for w in (1, 1, 3)]
        base_params, base_log = runs[0]
        for params, log in runs[1:]:
            assert log.losses == base_log.losses
            for name, tensor in base_params.items():
                assert params[name].tobytes() == tensor.tobytes()

    def test_first_batch_loss_matches_training(
        self, dataset: SceneDataset, tiny_arch: FieldArch, tiny_train: TrainConfig
    ) -> None:
        """The reported first-iteration loss is reproducible outside the loop."""
        _, log = train_stage(dataset, None, tiny_arch, tiny_train, stage=0)
        params = init_params(tiny_arch, stage_init_seed(tiny_train.seed, 0))
        loss, grads = first_batch_loss(params, tiny_arch, dataset, None, tiny_train, stage=0)
        assert loss == log.losses[0]
        assert set(grads) == set(params)

    def test_warm_start_keeps_source_loss(
        self, dataset: SceneDataset, tiny_arch: FieldArch, tiny_train: TrainConfig
    ) -> None:
        """A prompted stage warm-started from an unprompted field first sees that field's loss."""
        source, _ = train_stage(dataset, None, tiny_arch, tiny_train, stage=0)
        bank = synth_bank(PromptSource(kind=PromptSourceKind.GAUSSIAN_NOISE), dataset, (Split.TRAIN, Split.VAL))
        arch = tiny_arch.with_prompt(PromptSite.DIRECTION)
        _, log = train_stage(dataset, bank, arch, tiny_train, warm_from=source, stage=1)
        source_loss, _ = first_batch_loss(source, tiny_arch, dataset, None, tiny_train, stage=1)
        assert log.losses[0] == pytest.approx(source_loss, rel=1e-12)

    def test_validation_cadence(self, dataset: SceneDataset, tiny_arch: FieldArch, tiny_train: TrainConfig) -> None:
        """Validation runs every validate_every iterations and always at the end."""
        _, log = train_stage(dataset, None, tiny_arch, tiny_train.model_copy(update={"validate_every": 1}))
        assert [v.iteration for v in log.validations] == [0, 1, 2]
        _, log = train_stage(dataset, None, tiny_arch, tiny_train)
        assert [v.iteration for v in log.validations] == [2]

    def test_prompted_stage_trains_on_bank(
        self, dataset: SceneDataset, tiny_arch: FieldArch, tiny_train: TrainConfig
    ) -> None:
        """A prompted field trains when given a bank covering train and val."""
        arch = tiny_arch.with_prompt(PromptSite.DIRECTION)
        bank = synth_bank(PromptSource(kind=PromptSourceKind.GAUSSIAN_NOISE), dataset, (Split.TRAIN, Split.VAL))
        params, log = train_stage(dataset, bank, arch, tiny_train, stage=1)
        assert "coarse.dir.prompt_weight" in params
        assert len(log.losses) == 3

    def test_bank_required_iff_prompted(self, dataset: SceneDataset, tiny_arch: FieldArch, tiny_train: TrainConfig) -> None:
        """Prompted training needs a bank; unprompted training refuses one."""
        arch = tiny_arch.with_prompt(PromptSite.POSITION)
        with pytest.raises(MissingPromptBankError):
            train_stage(dataset, None, arch, tiny_train, stage=1)
        bank = synth_bank(PromptSource(kind=PromptSourceKind.GROUND_TRUTH), dataset, ALL_SPLITS)
        with pytest.raises(UsageError, match="unprompted"):
            train_stage(dataset, bank, tiny_arch, tiny_train)

    def test_bank_must_cover_val(self, dataset: SceneDataset, tiny_arch: FieldArch, tiny_train: TrainConfig) -> None:
        """A bank missing validation views is refused before training."""
        arch = tiny_arch.with_prompt(PromptSite.DIRECTION)
        bank = synth_bank(PromptSource(kind=PromptSourceKind.GROUND_TRUTH), dataset, (Split.TRAIN,))
        with pytest.raises(UsageError, match="val_000"):
            train_stage(dataset, bank, arch, tiny_train, stage=1)

    def test_log_round_trip(self, dataset: SceneDataset, tiny_arch: FieldArch, tiny_train: TrainConfig, tmp_path: Path) -> None:
        """log.jsonl holds every record and ends with the summary."""
        _, log = train_stage(dataset, None, tiny_arch, tiny_train)
        log.checkpoint = "stage_0/checkpoint"
        log.write_jsonl(tmp_path / "log.jsonl")
        lines = (tmp_path / "log.jsonl").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 3 + 1 + 1
        assert '"kind":"summary"' in lines[-1]
        again = StageLog.read_jsonl(tmp_path / "log.jsonl")
        assert again.losses == log.losses
        assert again.checkpoint == "stage_0/checkpoint"

    def test_learning_rate_decay(self) -> None:
        """The rate decays exponentially to the factor at the horizon."""
        cfg = TrainConfig(iterations=100, learning_rate=1e-3, lr_decay_factor=0.1)
        assert cfg.learning_rate_at(0) == pytest.approx(1e-3)
        assert cfg.learning_rate_at(50) == pytest.approx(1e-3 * 0.1**0.5)
        assert cfg.learning_rate_at(100) == pytest.approx(1e-4)


class TestEvaluation:
    """Scoring rendered views."""

    def test_ground_truth_scores_perfectly(self, dataset: SceneDataset) -> None:
        """The ground truth scored against itself hits the PSNR cap and zero depth error."""
        view = dataset.view("test_000")
        assert view.depth is not None
        metrics = score_view(dataset, "test_000", view.image, view.depth, Split.TEST)
        assert metrics.psnr == 100.0
        assert metrics.ssim == pytest.approx(1.0)
        assert metrics.depth_mse == 0.0

    def test_evaluate_split(self, dataset: SceneDataset, tiny_arch: FieldArch, tiny_train: TrainConfig) -> None:
        """Every view of the split is scored and averaged."""
        params = init_params(tiny_arch, seed=0)
        report = evaluate_split(params, tiny_arch, dataset, Split.TRAIN, tiny_train.render, stage=0)
        assert [v.view_id for v in report.views] == ["train_000", "train_001"]
        assert report.psnr == pytest.approx(np.mean([v.psnr for v in report.views]))
        assert report.stage == 0

    def test_prompted_evaluation_needs_bank(self, dataset: SceneDataset, tiny_arch: FieldArch, tiny_train: TrainConfig) -> None:
        """The error names the stage that needed the bank."""
        arch = tiny_arch.with_prompt(PromptSite.DIRECTION)
        with pytest.raises(MissingPromptBankError, match="stage 3"):
            evaluate_split(init_params(arch, seed=0), arch, dataset, Split.VAL, tiny_train.render, stage=3)

    def test_view_csv(self, dataset: SceneDataset, tiny_arch: FieldArch, tiny_train: TrainConfig, tmp_path: Path) -> None:
        """The per-view CSV has one row per view with the fixed header."""
        report = evaluate_split(init_params(tiny_arch, seed=0), tiny_arch, dataset, Split.VAL, tiny_train.render, stage=0)
        write_view_metrics(tmp_path / "views.csv", [report])
        with (tmp_path / "views.csv").open(encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ["stage", "split", "view_id", "psnr", "ssim", "depth_mse"]
        assert rows[1][:3] == ["0", "val", "val_000"]
        assert float(rows[1][3]) == report.views[0].psnr

    def test_complexity_counts(self) -> None:
        """The complexity report lists per-site counts and their overheads."""
        report = complexity_report(FieldArch.full(), name="full")
        assert report.params_none == 1_191_688
        assert report.direction_overhead == 768
        assert report.position_overhead == 3 * 256 * 2
        assert report.frames_per_second is None

    def test_complexity_throughput(self, tiny_arch: FieldArch) -> None:
        """With a resolution the report measures frames per second."""
        report = complexity_report(tiny_arch, resolution=8)
        assert report.frames_per_second is not None and report.frames_per_second > 0.0
        assert report.resolution == 8
