"""The stage loop: train, render a prompt bank, retrain conditioned on it, repeat.

Run directory::

    run.json                 effective config, dataset path and hash, seeds, protocol note
    cascade.json             CascadeState, rewritten after every stage
    stage_{i}/checkpoint     field parameters
    stage_{i}/log.jsonl      iteration and validation records, then a summary
    stage_{i}/metrics.json   val and test MetricReports
    prompts/stage_{i}/       bank rendered by stage i
    prompts/<source>/        fixed synthetic bank, when one is used
    metrics.csv              stage, psnr, ssim, depth_mse, wall_time
    metrics_views.csv        stage, split, view_id, psnr, ssim, depth_mse
"""

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import structlog
from pydantic import BaseModel, Field, ValidationError

from .. import __version__
from ..autodiff import ParamStore
from ..config import RunConfig
from ..errors import CascadeNerfError, IntegrityError, UsageError
from ..field.checkpoint import Checkpoint, checkpoint_hash, load_checkpoint, save_checkpoint
from ..models.field import PromptSite
from ..models.metrics import MetricReport
from ..models.prompt import PromptBank, PromptSource, PromptSourceKind
from ..models.scene import SceneDataset, Split
from ..models.training import CascadeState, StageMetrics, StageRecord, StopReason
from ..observability import get_tracer
from ..prompts.bank import bank_distance, build_bank, load_bank, save_bank, synth_bank
from ..scene.dataset import dataset_hash, load_dataset, subsample_dataset
from .evaluation import evaluate_split, write_view_metrics
from .trainer import train_stage

logger = structlog.get_logger(__name__)
tracer = get_tracer(__name__)

RUN_FILE = "run.json"
STATE_FILE = "cascade.json"
STAGE_COLUMNS = ["stage", "psnr", "ssim", "depth_mse", "wall_time"]
TRANSDUCTIVE_NOTE = (
    "Prompt banks are rendered for the train, val and test poses, so test poses are "
    "known while training; evaluation on the test split is transductive."
)


class RunManifest(BaseModel):
    """Contents of run.json."""

    version: str = __version__
    config: dict[str, Any]
    dataset_path: str | None = None
    dataset_hash: str
    views_per_split: tuple[int, int, int] | None = None
    seeds: dict[str, int] = Field(default_factory=dict)
    protocol: str = TRANSDUCTIVE_NOTE


class StageReports(BaseModel):
    """Contents of stage_{i}/metrics.json."""

    val: MetricReport
    test: MetricReport | None = None


@dataclass
class _Run:
    run_dir: Path
    dataset: SceneDataset
    config: RunConfig
    manifest: RunManifest

    def stage_dir(self, stage: int) -> Path:
        return self.run_dir / f"stage_{stage}"

    def bank_dir(self, tag: str) -> Path:
        return self.run_dir / "prompts" / tag

    def rel(self, path: Path) -> str:
        return path.relative_to(self.run_dir).as_posix()


def _fixed_source(run: _Run) -> PromptSource | None:
    cfg = run.config.cascade
    if cfg.prompt_source is PromptSourceKind.RENDERED:
        return None
    return PromptSource(kind=cfg.prompt_source, mean=cfg.noise_mean, stddev=cfg.noise_stddev, seed=run.config.seed)


def _input_bank(run: _Run, stage: int, previous: PromptBank | None) -> tuple[PromptBank | None, str | None]:
    """The bank stage `stage` is conditioned on, and its location in the run directory."""
    if stage == 0:
        return None, None
    source = _fixed_source(run)
    if source is None:
        if previous is None:
            raise IntegrityError(f"stage {stage} needs the bank of stage {stage - 1}")
        return previous, run.rel(run.bank_dir(previous.tag))
    path = run.bank_dir(source.kind.value)
    if (path / "manifest.json").is_file():
        bank = load_bank(path)
    else:
        bank = synth_bank(source, run.dataset, run.config.cascade.bank_splits)
        save_bank(bank, path)
    return bank, run.rel(path)


def _write_stage_csv(run: _Run, state: CascadeState) -> None:
    with (run.run_dir / "metrics.csv").open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(STAGE_COLUMNS)
        for record in state.stages:
            m = record.metrics
            writer.writerow([
                record.stage,
                repr(m.psnr),
                repr(m.ssim),
                "" if m.depth_mse is None else repr(m.depth_mse),
                f"{m.wall_time:.3f}",
            ])
    reports: list[MetricReport] = []
    for record in state.stages:
        stage_reports = StageReports.model_validate_json(
            (run.stage_dir(record.stage) / "metrics.json").read_text(encoding="utf-8")
        )
        reports.append(stage_reports.val)
        if stage_reports.test is not None:
            reports.append(stage_reports.test)
    write_view_metrics(run.run_dir / "metrics_views.csv", reports)


def _stop_reason(run: _Run, stage: int, distance: float | None) -> StopReason | None:
    cfg = run.config.cascade
    if stage >= 1 and _fixed_source(run) is not None:
        return StopReason.FIXED_PROMPT
    if distance is not None and distance <= cfg.stop_threshold:
        return StopReason.THRESHOLD
    if stage + 1 >= cfg.max_stages:
        return StopReason.MAX_STAGES
    return None


def _run_stage(
    run: _Run, stage: int, previous_bank: PromptBank | None, previous_params: ParamStore | None
) -> tuple[StageRecord, PromptBank, ParamStore]:
    cfg = run.config.cascade
    site = PromptSite.NONE if stage == 0 else cfg.prompt_site
    arch = run.config.arch.with_prompt(site)
    train_cfg = cfg.train_config_for(run.config.train.model_copy(update={"seed": run.config.seed}), stage)
    input_bank, input_ref = _input_bank(run, stage, previous_bank)
    warm = previous_params if cfg.warm_starts(stage) else None
    workers = run.config.workers

    logger.info(
        "Stage starting",
        stage=stage,
        prompt_site=site.value,
        iterations=train_cfg.iterations,
        warm_start=warm is not None,
        input_bank=input_ref,
    )
    params, log = train_stage(run.dataset, input_bank, arch, train_cfg, warm, stage, workers)

    stage_dir = run.stage_dir(stage)
    ckpt_path = stage_dir / "checkpoint"
    digest = save_checkpoint(
        ckpt_path,
        Checkpoint(
            arch=arch,
            params=params,
            stage=stage,
            seed=run.config.seed,
            metadata={
                "version": __version__,
                "dataset_hash": run.manifest.dataset_hash,
                "input_bank": input_ref,
                "input_bank_checkpoint": input_bank.checkpoint_hash if input_bank else None,
                "iterations": train_cfg.iterations,
                "warm_start": warm is not None,
            },
        ),
    )
    log.checkpoint = run.rel(ckpt_path)
    log.write_jsonl(stage_dir / "log.jsonl")

    output_bank = build_bank(
        params, arch, run.dataset, train_cfg.render, cfg.bank_splits, stage,
        prompts=input_bank, checkpoint_hash=digest, workers=workers,
    )
    out_path = run.bank_dir(output_bank.tag)
    save_bank(output_bank, out_path)

    distance = None
    if previous_bank is not None and input_bank is previous_bank:
        distance = bank_distance(output_bank, previous_bank)

    val = evaluate_split(params, arch, run.dataset, Split.VAL, train_cfg.render, input_bank, workers, stage)
    test = None
    if run.dataset.views_in(Split.TEST) and (input_bank is None or Split.TEST in input_bank.splits):
        test = evaluate_split(params, arch, run.dataset, Split.TEST, train_cfg.render, input_bank, workers, stage)
    (stage_dir / "metrics.json").write_text(
        StageReports(val=val, test=test).model_dump_json(indent=2), encoding="utf-8"
    )

    record = StageRecord(
        stage=stage,
        checkpoint=run.rel(ckpt_path),
        checkpoint_hash=digest,
        input_bank=input_ref,
        output_bank=run.rel(out_path),
        metrics=StageMetrics(
            psnr=val.psnr,
            ssim=val.ssim,
            depth_mse=val.depth_mse,
            wall_time=log.wall_time,
            iterations=train_cfg.iterations,
            bank_distance=distance,
        ),
    )
    logger.info(
        "Stage complete",
        stage=stage,
        psnr=round(val.psnr, 3),
        ssim=round(val.ssim, 4),
        depth_mse=val.depth_mse,
        bank_distance=distance,
    )
    return record, output_bank, params


def _continue(run: _Run, state: CascadeState) -> CascadeState:
    previous_bank: PromptBank | None = None
    previous_params: ParamStore | None = None
    if state.stages:
        last = state.stages[-1]
        previous_bank = load_bank(run.run_dir / last.output_bank)
        previous_params = load_checkpoint(run.run_dir / last.checkpoint).params
    stage = state.completed
    try:
        while not state.finished:
            with tracer.start_as_current_span("cascade_stage") as span:
                span.set_attribute("stage", stage)
                record, previous_bank, previous_params = _run_stage(run, stage, previous_bank, previous_params)
            state.stages.append(record)
            state.stop_reason = _stop_reason(run, stage, record.metrics.bank_distance)
            state.save(run.run_dir / STATE_FILE)
            _write_stage_csv(run, state)
            stage += 1
    except CascadeNerfError:
        state.save(run.run_dir / STATE_FILE)
        logger.error("Cascade aborted", completed=state.completed, run_dir=str(run.run_dir))
        raise
    logger.info(
        "Cascade finished",
        stages=state.completed,
        stop_reason=state.stop_reason.value if state.stop_reason else None,
        bank_distances=state.bank_distances,
    )
    return state


def _check_config(config: RunConfig, dataset: SceneDataset) -> None:
    if not dataset.views_in(Split.TRAIN) or not dataset.views_in(Split.VAL):
        raise UsageError("a cascade needs non-empty train and val splits")
    banks = set(config.cascade.bank_splits)
    if not {Split.TRAIN, Split.VAL} <= banks:
        raise UsageError("cascade.bank_splits must include train and val")


def run_cascade(
    dataset: SceneDataset,
    config: RunConfig,
    run_dir: Path,
    dataset_path: Path | None = None,
    views_per_split: tuple[int, int, int] | None = None,
) -> CascadeState:
    """Run every stage from scratch, persisting artifacts under run_dir.

    When dataset_path is given the run can later be resumed; views_per_split
    records the subsampling already applied to dataset.
    """
    _check_config(config, dataset)
    if (run_dir / STATE_FILE).exists():
        raise UsageError(f"{run_dir} already holds a cascade; resume it instead")
    run_dir.mkdir(parents=True, exist_ok=True)
    digest = dataset_hash(dataset_path) if dataset_path is not None else "in-memory"
    manifest = RunManifest(
        config=config.echo(),
        dataset_path=str(dataset_path.resolve()) if dataset_path is not None else None,
        dataset_hash=digest,
        views_per_split=views_per_split,
        seeds={"run": config.seed, "train": config.seed, "noise": config.seed},
    )
    (run_dir / RUN_FILE).write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
    state = CascadeState(dataset_hash=digest)
    state.save(run_dir / STATE_FILE)
    logger.info("Cascade starting", run_dir=str(run_dir), max_stages=config.cascade.max_stages, dataset_hash=digest)
    return _continue(_Run(run_dir, dataset, config, manifest), state)


def resume_cascade(run_dir: Path, workers: int | None = None) -> CascadeState:
    """Continue a run from its last completed stage; a finished run is returned unchanged."""
    try:
        manifest = RunManifest.model_validate_json((run_dir / RUN_FILE).read_text(encoding="utf-8"))
        state = CascadeState.load(run_dir / STATE_FILE)
    except OSError as e:
        raise IntegrityError(f"{run_dir}: cannot read run files: {e}") from e
    except (ValidationError, json.JSONDecodeError) as e:
        raise IntegrityError(f"{run_dir}: corrupted run manifest: {e}") from e
    if state.dataset_hash != manifest.dataset_hash:
        raise IntegrityError(f"{run_dir}: cascade state and run manifest name different datasets")
    for record in state.stages:
        path = run_dir / record.checkpoint
        if not path.is_file() or checkpoint_hash(path) != record.checkpoint_hash:
            raise IntegrityError(f"{path}: checkpoint does not match the recorded hash")
    if state.finished:
        logger.info("Cascade already finished", run_dir=str(run_dir), stages=state.completed)
        return state
    if manifest.dataset_path is None:
        raise IntegrityError(f"{run_dir}: run was started from an in-memory dataset and cannot be resumed")
    path = Path(manifest.dataset_path)
    current = dataset_hash(path)
    if current != manifest.dataset_hash:
        raise IntegrityError(f"{path}: dataset hash {current[:12]} differs from the recorded {manifest.dataset_hash[:12]}")
    config = RunConfig.model_validate(manifest.config)
    if workers is not None:
        config = config.model_copy(update={"workers": workers})
    dataset = load_dataset(path)
    if manifest.views_per_split is not None:
        dataset = subsample_dataset(dataset, manifest.views_per_split)
    logger.info("Resuming cascade", run_dir=str(run_dir), completed=state.completed)
    return _continue(_Run(run_dir, dataset, config, manifest), state)
