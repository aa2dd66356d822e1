"""Single-stage training: ray batching, photometric loss, Adam and validation."""

import time
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
import structlog

from ..autodiff import ParamStore, Tensor
from ..errors import MissingPromptBankError, NonFiniteError, UsageError
from ..field.network import init_params
from ..models.field import FieldArch
from ..models.prompt import PromptBank
from ..models.scene import SceneDataset, Split
from ..models.training import IterationRecord, StageLog, TrainConfig, ValidationRecord
from ..observability import create_training_metrics, get_tracer
from ..prompts.bank import check_coverage
from ..render.renderer import RayTrace, render_rays
from ..rng import derive_seed, make_rng
from ..scene.camera import pixel_grid, ray_bundle
from .evaluation import evaluate_split
from .optimizer import OptimizerState, optimizer_step

logger = structlog.get_logger(__name__)
tracer = get_tracer(__name__)

Array = npt.NDArray[np.float64]


def photometric_loss(pred: npt.ArrayLike, gt: npt.ArrayLike) -> float:
    """Mean squared error over a batch of colors."""
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise UsageError(f"prediction shape {p.shape} differs from target shape {g.shape}")
    return float(np.mean((p - g) ** 2))


def stage_init_seed(seed: int, stage: int) -> int:
    """Seed of a stage's fresh initialization."""
    return int(derive_seed(seed, "init", stage).generate_state(1)[0])


@dataclass
class RayPool:
    """Every training pixel as a ray with its target color and prompt."""

    origins: Array
    directions: Array
    targets: Array
    prompts: Array | None

    @property
    def size(self) -> int:
        return int(self.origins.shape[0])

    @classmethod
    def from_dataset(cls, dataset: SceneDataset, bank: PromptBank | None, split: Split = Split.TRAIN) -> "RayPool":
        views = dataset.views_in(split)
        if not views:
            raise UsageError(f"split {split.value} has no views")
        pixels = pixel_grid(dataset.intrinsics)
        origins, directions, targets, prompts = [], [], [], []
        for view in views:
            o, d = ray_bundle(dataset.intrinsics, view.pose, pixels)
            origins.append(o)
            directions.append(d)
            targets.append(view.image.reshape(-1, 3))
            if bank is not None:
                prompts.append(bank.images[view.id].reshape(-1, 3))
        return cls(
            np.concatenate(origins),
            np.concatenate(directions),
            np.concatenate(targets),
            np.concatenate(prompts) if bank is not None else None,
        )


class RayBatcher:
    """Batches drawn without replacement from a fresh shuffle of the pool every epoch."""

    def __init__(self, pool_size: int, batch_rays: int, seed: int, stage: int) -> None:
        self.pool_size = pool_size
        self.batch_rays = batch_rays
        self.seed = seed
        self.stage = stage
        self._epoch = -1
        self._order = np.empty(0, dtype=np.int64)
        self._cursor = 0

    def _shuffle(self) -> None:
        self._epoch += 1
        self._order = make_rng(self.seed, "shuffle", self.stage, self._epoch).permutation(self.pool_size)
        self._cursor = 0

    def next_batch(self) -> npt.NDArray[np.int64]:
        parts = []
        needed = self.batch_rays
        while needed > 0:
            if self._cursor >= self._order.size:
                self._shuffle()
            take = self._order[self._cursor : self._cursor + needed]
            self._cursor += take.size
            needed -= take.size
            parts.append(take)
        return np.concatenate(parts)


def _check_bank(arch: FieldArch, bank: PromptBank | None, dataset: SceneDataset, stage: int) -> None:
    if arch.prompt_dim and bank is None:
        raise MissingPromptBankError(stage)
    if not arch.prompt_dim and bank is not None:
        raise UsageError("an unprompted architecture cannot consume a prompt bank")
    if bank is not None:
        check_coverage(bank, dataset, [Split.TRAIN, Split.VAL])


def trace_batch(
    params: ParamStore,
    arch: FieldArch,
    pool: RayPool,
    index: npt.NDArray[np.int64],
    dataset: SceneDataset,
    cfg: TrainConfig,
    stage: int,
    iteration: int,
    with_grad: bool = True,
    workers: int = 1,
) -> RayTrace:
    """Render one training batch; the loss is MSE(coarse) + MSE(fine)."""
    return render_rays(
        params,
        arch,
        pool.origins[index],
        pool.directions[index],
        cfg.render,
        dataset.t_near,
        dataset.t_far,
        None if pool.prompts is None else pool.prompts[index],
        make_rng(cfg.seed, "render", stage, iteration),
        pool.targets[index],
        with_grad=with_grad,
        workers=workers,
    )


def first_batch_loss(
    params: ParamStore,
    arch: FieldArch,
    dataset: SceneDataset,
    bank: PromptBank | None,
    cfg: TrainConfig,
    stage: int,
    workers: int = 1,
) -> tuple[float, dict[str, Tensor]]:
    """Loss and gradients that train_stage would see at its first iteration."""
    pool = RayPool.from_dataset(dataset, bank)
    index = RayBatcher(pool.size, cfg.batch_rays, cfg.seed, stage).next_batch()
    trace = trace_batch(params, arch, pool, index, dataset, cfg, stage, 0, True, workers)
    assert trace.loss is not None and trace.grads is not None
    return trace.loss, trace.grads


def train_stage(
    dataset: SceneDataset,
    bank: PromptBank | None,
    arch: FieldArch,
    cfg: TrainConfig,
    warm_from: ParamStore | None = None,
    stage: int = 0,
    workers: int = 1,
    on_iteration: Callable[[IterationRecord], None] | None = None,
) -> tuple[ParamStore, StageLog]:
    """Optimize a fresh (or warm-started) field on the train split; validate on val."""
    _check_bank(arch, bank, dataset, stage)
    instruments = create_training_metrics()
    params = init_params(arch, stage_init_seed(cfg.seed, stage), warm_from)
    state = OptimizerState(params, cfg.beta1, cfg.beta2, cfg.adam_eps)
    pool = RayPool.from_dataset(dataset, bank)
    batcher = RayBatcher(pool.size, cfg.batch_rays, cfg.seed, stage)
    log = StageLog(stage=stage)
    start = time.perf_counter()

    def validate(iteration: int) -> None:
        report = evaluate_split(params, arch, dataset, Split.VAL, cfg.render, bank, workers=workers, stage=stage)
        record = ValidationRecord(
            iteration=iteration, psnr=report.psnr, ssim=report.ssim, elapsed=time.perf_counter() - start
        )
        log.validations.append(record)
        logger.info("Validation", stage=stage, iteration=iteration, psnr=round(report.psnr, 3), ssim=round(report.ssim, 4))

    with tracer.start_as_current_span("train_stage") as span:
        span.set_attribute("stage", stage)
        span.set_attribute("iterations", cfg.iterations)
        span.set_attribute("prompt_site", arch.prompt_site.value)
        for iteration in range(cfg.iterations):
            index = batcher.next_batch()
            trace = trace_batch(params, arch, pool, index, dataset, cfg, stage, iteration, True, workers)
            if trace.loss is None or trace.grads is None or not np.isfinite(trace.loss):
                raise NonFiniteError(f"loss at iteration {iteration}")
            lr = cfg.learning_rate_at(iteration)
            optimizer_step(state, trace.grads, lr)
            record = IterationRecord(
                iteration=iteration, loss=trace.loss, learning_rate=lr, elapsed=time.perf_counter() - start
            )
            log.iterations.append(record)
            instruments.iterations.add(1, {"stage": stage})
            instruments.rays_rendered.add(int(index.size), {"stage": stage})
            if on_iteration is not None:
                on_iteration(record)
            if iteration % cfg.log_every == 0 or iteration == cfg.iterations - 1:
                logger.info("Training", stage=stage, iteration=iteration, loss=trace.loss, lr=lr)
            is_last = iteration == cfg.iterations - 1
            if cfg.validate_every and (iteration + 1) % cfg.validate_every == 0 and not is_last:
                validate(iteration)
        validate(cfg.iterations - 1)
    log.wall_time = time.perf_counter() - start
    instruments.stage_seconds.record(log.wall_time, {"stage": stage})
    final = log.final_validation
    if final is not None:
        instruments.stage_psnr.record(final.psnr, {"stage": stage})
    logger.info(
        "Stage trained",
        stage=stage,
        iterations=cfg.iterations,
        wall_time=round(log.wall_time, 2),
        final_loss=log.iterations[-1].loss,
    )
    return params, log
