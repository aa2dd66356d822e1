"""Rendering dataset splits and scoring them against ground truth."""

import csv
import time
from collections.abc import Iterable
from pathlib import Path

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel

from ..autodiff import ParamStore
from ..errors import MissingPromptBankError, UsageError
from ..field.network import init_params, param_count
from ..metrics import depth_mse, psnr, ssim
from ..models.camera import CameraIntrinsics
from ..models.field import FieldArch, PromptSite
from ..models.metrics import MetricReport, ViewMetrics
from ..models.prompt import PromptBank
from ..models.render import RenderConfig
from ..models.scene import SceneDataset, Split
from ..observability import get_tracer
from ..prompts.bank import prompt_image
from ..render.renderer import render_view
from ..scene.camera import look_at

tracer = get_tracer(__name__)

Array = npt.NDArray[np.float64]

VIEW_COLUMNS = ["stage", "split", "view_id", "psnr", "ssim", "depth_mse"]


def score_view(
    dataset: SceneDataset, view_id: str, image: Array, depth: Array, split: Split
) -> ViewMetrics:
    """PSNR and SSIM against the float ground truth; depth error over valid ground-truth pixels."""
    view = dataset.view(view_id)
    mask = dataset.gt_depth_mask(view)
    d_mse = None
    if view.depth is not None and mask is not None and mask.any():
        d_mse = depth_mse(depth, view.depth, mask)
    return ViewMetrics(
        view_id=view_id,
        split=split.value,
        psnr=psnr(image, view.image),
        ssim=ssim(image, view.image),
        depth_mse=d_mse,
    )


def evaluate_split(
    params: ParamStore,
    arch: FieldArch,
    dataset: SceneDataset,
    split: Split,
    cfg: RenderConfig,
    bank: PromptBank | None = None,
    workers: int = 1,
    stage: int | None = None,
) -> MetricReport:
    """Render every view of a split deterministically and report per-view metrics and means."""
    if arch.prompt_dim and bank is None:
        raise MissingPromptBankError(stage if stage is not None else -1)
    views = dataset.views_in(split)
    if not views:
        raise UsageError(f"split {split.value} has no views")
    results = []
    with tracer.start_as_current_span("evaluate_split") as span:
        span.set_attribute("split", split.value)
        for view in views:
            image, depth = render_view(
                params, arch, dataset.intrinsics, view.pose, cfg,
                dataset.t_near, dataset.t_far, prompt_image(bank, view.id), workers,
            )
            results.append(score_view(dataset, view.id, image, depth, split))
    return MetricReport.from_views(results, split.value, stage)


def write_view_metrics(path: Path, reports: Iterable[MetricReport]) -> None:
    """CSV with one row per (stage, split, view)."""
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(VIEW_COLUMNS)
        for report in reports:
            for v in report.views:
                writer.writerow([
                    "" if report.stage is None else report.stage,
                    v.split,
                    v.view_id,
                    repr(v.psnr),
                    repr(v.ssim),
                    "" if v.depth_mse is None else repr(v.depth_mse),
                ])


class ComplexityReport(BaseModel):
    """Parameter counts per prompt site and measured render throughput."""

    arch: str
    params_none: int
    params_direction: int
    params_position: int
    direction_overhead: int
    position_overhead: int
    frames_per_second: float | None = None
    resolution: int | None = None


def complexity_report(
    arch: FieldArch, name: str = "custom", resolution: int | None = None, cfg: RenderConfig | None = None, workers: int = 1
) -> ComplexityReport:
    """Closed-form parameter counts and, when resolution is given, frames per second of one rendered view."""
    counts = {site: param_count(arch.with_prompt(site)) for site in PromptSite}
    fps = None
    if resolution is not None:
        bare = arch.with_prompt(PromptSite.NONE)
        params = init_params(bare, seed=0)
        intrinsics = CameraIntrinsics(width=resolution, height=resolution, fov_x=0.6981317007977318)
        start = time.perf_counter()
        render_view(params, bare, intrinsics, look_at((0.0, -4.0, 2.0)), cfg or RenderConfig(), 2.0, 6.0, workers=workers)
        fps = 1.0 / max(time.perf_counter() - start, 1e-9)
    return ComplexityReport(
        arch=name,
        params_none=counts[PromptSite.NONE],
        params_direction=counts[PromptSite.DIRECTION],
        params_position=counts[PromptSite.POSITION],
        direction_overhead=counts[PromptSite.DIRECTION] - counts[PromptSite.NONE],
        position_overhead=counts[PromptSite.POSITION] - counts[PromptSite.NONE],
        frames_per_second=fps,
        resolution=resolution,
    )
