"""Command-line entry point."""

import functools
import sys
from collections.abc import Callable
from pathlib import Path
from typing import Any, ParamSpec, TypeVar

import click
import structlog
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from . import __version__
from .config import RunConfig, get_settings, load_run_config
from .errors import CascadeNerfError, MissingPromptBankError, UsageError
from .field.checkpoint import Checkpoint, checkpoint_hash, load_checkpoint, save_checkpoint
from .models.field import ARCH_PRESETS, PromptSite
from .models.metrics import MetricReport
from .models.prompt import PromptBank, PromptSourceKind
from .models.scene import ALL_SPLITS, SceneDataset, SceneSpec, Split
from .models.training import CascadeState, WarmStart
from .observability import configure_logging, setup_telemetry, shutdown_telemetry
from .prompts.bank import build_bank, load_bank, prompt_image, save_bank
from .render.renderer import render_view
from .scene.analytic import SCENES
from .scene.dataset import dataset_hash, gen_scene, load_dataset, subsample_dataset
from .scene.imageio import depth_preview, write_f32, write_png
from .training.cascade import resume_cascade, run_cascade
from .training.evaluation import complexity_report, evaluate_split, write_view_metrics
from .training.trainer import train_stage

logger = structlog.get_logger(__name__)

P = ParamSpec("P")
R = TypeVar("R")

PROMPT_SOURCES = {
    "rendered": PromptSourceKind.RENDERED,
    "ground-truth": PromptSourceKind.GROUND_TRUTH,
    "noise": PromptSourceKind.GAUSSIAN_NOISE,
}


def _guarded(func: Callable[P, R]) -> Callable[P, R]:
    """Turn pipeline errors into a logged message and exit status 1."""

    @functools.wraps(func)
    def wrapper(*args: P.args, **kwargs: P.kwargs) -> R:
        try:
            return func(*args, **kwargs)
        except CascadeNerfError as e:
            logger.error("Command failed", command=func.__name__, error=str(e), error_type=type(e).__name__)
            click.echo(f"Error: {e}", err=True)
            sys.exit(1)
        except ValidationError as e:
            logger.error("Invalid arguments", command=func.__name__, error=str(e))
            click.echo(f"Error: {e}", err=True)
            sys.exit(1)

    return wrapper


def _parse_counts(_ctx: click.Context, _param: click.Parameter, value: str | None) -> tuple[int, int, int] | None:
    if value is None:
        return None
    try:
        counts = tuple(int(part) for part in value.split(","))
    except ValueError:
        raise click.BadParameter(f"expected three comma-separated integers, got '{value}'") from None
    if len(counts) != 3 or min(counts) < 0:
        raise click.BadParameter(f"expected three non-negative integers train,val,test, got '{value}'")
    return counts[0], counts[1], counts[2]


def _parse_stages(_ctx: click.Context, _param: click.Parameter, value: str | None) -> int | None:
    """'N' counts every stage including stage 0; 'N-prompted' counts prompted stages only."""
    if value is None:
        return None
    text, _, suffix = value.partition("-")
    if suffix not in ("", "prompted") or not text.isdigit():
        raise click.BadParameter(f"expected N or N-prompted, got '{value}'")
    stages = int(text) + (1 if suffix else 0)
    if stages < 1:
        raise click.BadParameter("at least one stage is required")
    return stages


def run_options(func: Callable[P, R]) -> Callable[P, R]:
    """--config, --set, --seed and --workers shared by every training or rendering command."""
    func = click.option("--workers", type=click.IntRange(min=1), help="Worker threads (default: CASCADE_NERF_WORKERS)")(func)
    func = click.option("--seed", type=int, help="Root seed of every random stream")(func)
    func = click.option("--set", "sets", multiple=True, metavar="KEY=VALUE", help="Override a config key")(func)
    func = click.option(
        "--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="Config file"
    )(func)
    return func


def _run_config(
    config_path: Path | None,
    sets: tuple[str, ...],
    seed: int | None,
    workers: int | None,
    arch: str | None = None,
    extra: tuple[str, ...] = (),
) -> RunConfig:
    """Effective config: defaults < environment < preset < file < --set < dedicated flags."""
    base = RunConfig(workers=get_settings().workers)
    if arch is not None:
        base = base.model_copy(update={"arch": ARCH_PRESETS[arch]()})
    flags = list(sets) + list(extra)
    if seed is not None:
        flags.append(f"seed={seed}")
    if workers is not None:
        flags.append(f"workers={workers}")
    config = load_run_config(config_path, flags, base=base)
    logger.debug("Effective config", config=config.echo())
    return config


def _dataset(path: Path, views: tuple[int, int, int] | None = None) -> SceneDataset:
    dataset = load_dataset(path)
    return subsample_dataset(dataset, views) if views is not None else dataset


def _bank(path: Path | None) -> PromptBank | None:
    return load_bank(path) if path is not None else None


def _checkpoint_bank(ckpt: Checkpoint, prompts: Path | None) -> PromptBank | None:
    bank = _bank(prompts)
    if ckpt.prompted and bank is None:
        raise MissingPromptBankError(ckpt.stage)
    if not ckpt.prompted and bank is not None:
        raise UsageError(f"checkpoint of stage {ckpt.stage} is not prompt-conditioned; drop --prompts")
    return bank


def _report_table(reports: list[MetricReport]) -> Table:
    table = Table(title="Evaluation")
    for column in ("split", "view", "PSNR", "SSIM", "depth MSE"):
        table.add_column(column, justify="right" if column not in ("split", "view") else "left")
    for report in reports:
        for v in report.views:
            table.add_row(v.split, v.view_id, f"{v.psnr:.2f}", f"{v.ssim:.4f}", _fmt(v.depth_mse))
        table.add_row(report.split, "mean", f"{report.psnr:.2f}", f"{report.ssim:.4f}", _fmt(report.depth_mse), style="bold")
    return table


def _fmt(value: float | None, digits: int = 5) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def _cascade_table(state: CascadeState) -> Table:
    table = Table(title=f"Cascade ({state.stop_reason.value if state.stop_reason else 'incomplete'})")
    for column in ("stage", "PSNR", "SSIM", "depth MSE", "bank distance", "iterations", "seconds"):
        table.add_column(column, justify="right")
    for record in state.stages:
        m = record.metrics
        table.add_row(
            str(record.stage),
            f"{m.psnr:.2f}",
            f"{m.ssim:.4f}",
            _fmt(m.depth_mse),
            _fmt(m.bank_distance),
            str(m.iterations),
            f"{m.wall_time:.1f}",
        )
    return table


@click.group()
@click.version_option(__version__)
@click.option("--log-level", help="Override CASCADE_NERF_LOG_LEVEL")
@click.pass_context
def cli(ctx: click.Context, log_level: str | None) -> None:
    """Cascaded view-prompt tuning for neural radiance fields."""
    settings = get_settings()
    configure_logging(log_level or ("DEBUG" if settings.debug else settings.log_level))
    setup_telemetry(settings)
    ctx.call_on_close(shutdown_telemetry)


@cli.command("gen-scene")
@click.option("--scene", "scene_name", required=True, help=f"One of: {', '.join(sorted(SCENES))}")
@click.option("--res", "resolution", type=int, default=32, show_default=True, help="Square image side")
@click.option("--views", callback=_parse_counts, default="10,3,3", show_default=True, help="train,val,test")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--quadrature", type=int, default=1024, show_default=True, help="Oracle samples per ray")
@click.option("--out", required=True, type=click.Path(file_okay=False, path_type=Path))
@_guarded
def gen_scene_cmd(
    scene_name: str, resolution: int, views: tuple[int, int, int], seed: int, quadrature: int, out: Path
) -> None:
    """Render an analytic scene into a dataset directory and print its hash."""
    spec = SceneSpec(
        scene=scene_name,
        train_views=views[0],
        val_views=views[1],
        test_views=views[2],
        resolution=resolution,
        seed=seed,
        quadrature_n=quadrature,
    )
    gen_scene(spec, out)
    click.echo(dataset_hash(out))


@cli.command("train")
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--out", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--arch", type=click.Choice(sorted(ARCH_PRESETS)), help="Architecture preset")
@click.option("--stage", type=click.IntRange(min=0), default=0, show_default=True, help="Stage index (seeds init)")
@click.option("--prompts", type=click.Path(exists=True, file_okay=False, path_type=Path), help="Input prompt bank")
@click.option("--prompt-site", type=click.Choice(["direction", "position"]), help="Defaults to cascade.prompt_site")
@click.option("--warm-from", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="Checkpoint to copy")
@click.option("--iterations", type=click.IntRange(min=1), help="Shortcut for --set train.iterations=N")
@click.option("--views-per-split", "views", callback=_parse_counts, help="Keep the first train,val,test views")
@run_options
@_guarded
def train_cmd(
    data: Path,
    out: Path,
    arch: str | None,
    stage: int,
    prompts: Path | None,
    prompt_site: str | None,
    warm_from: Path | None,
    iterations: int | None,
    views: tuple[int, int, int] | None,
    config_path: Path | None,
    sets: tuple[str, ...],
    seed: int | None,
    workers: int | None,
) -> None:
    """Train a single stage and write its checkpoint and log."""
    if prompt_site is not None and prompts is None:
        raise click.UsageError("--prompt-site needs --prompts")
    extra = (f"train.iterations={iterations}",) if iterations is not None else ()
    config = _run_config(config_path, sets, seed, workers, arch, extra)
    dataset = _dataset(data, views)
    bank = _bank(prompts)
    site = PromptSite.NONE
    if bank is not None:
        site = PromptSite(prompt_site) if prompt_site else config.cascade.prompt_site
    field_arch = config.arch.with_prompt(site)
    train_cfg = config.train.model_copy(update={"seed": config.seed})
    warm = load_checkpoint(warm_from).params if warm_from is not None else None

    params, log = train_stage(dataset, bank, field_arch, train_cfg, warm, stage, config.workers)
    out.mkdir(parents=True, exist_ok=True)
    digest = save_checkpoint(
        out / "checkpoint",
        Checkpoint(
            arch=field_arch,
            params=params,
            stage=stage,
            seed=config.seed,
            metadata={"version": __version__, "config": config.echo(), "prompts": str(prompts) if prompts else None},
        ),
    )
    log.checkpoint = "checkpoint"
    log.write_jsonl(out / "log.jsonl")
    final = log.final_validation
    click.echo(digest)
    if final is not None:
        Console().print(f"stage {stage}: val PSNR {final.psnr:.2f} dB, SSIM {final.ssim:.4f}")


@cli.command("render-prompts")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--out", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--prompts", type=click.Path(exists=True, file_okay=False, path_type=Path), help="Bank the checkpoint reads")
@click.option("--splits", default="train,val,test", show_default=True, help="Splits to render")
@run_options
@_guarded
def render_prompts_cmd(
    checkpoint: Path,
    data: Path,
    out: Path,
    prompts: Path | None,
    splits: str,
    config_path: Path | None,
    sets: tuple[str, ...],
    seed: int | None,
    workers: int | None,
) -> None:
    """Render a checkpoint's prompt bank for every view of the chosen splits."""
    try:
        chosen = [Split(name.strip()) for name in splits.split(",") if name.strip()]
    except ValueError:
        raise click.BadParameter(f"splits must be drawn from {', '.join(s.value for s in ALL_SPLITS)}") from None
    config = _run_config(config_path, sets, seed, workers)
    ckpt = load_checkpoint(checkpoint)
    bank_in = _checkpoint_bank(ckpt, prompts)
    dataset = _dataset(data)
    bank = build_bank(
        ckpt.params, ckpt.arch, dataset, config.train.render, chosen, ckpt.stage,
        prompts=bank_in, checkpoint_hash=checkpoint_hash(checkpoint), workers=config.workers,
    )
    save_bank(bank, out)
    click.echo(f"{len(bank.images)} prompt images written to {out}")


@cli.command("cascade")
@click.option("--data", type=click.Path(exists=True, file_okay=False, path_type=Path), help="Dataset directory")
@click.option("--out", required=True, type=click.Path(file_okay=False, path_type=Path), help="Run directory")
@click.option("--resume", is_flag=True, help="Continue the run in --out")
@click.option("--arch", type=click.Choice(sorted(ARCH_PRESETS)), help="Architecture preset")
@click.option("--stages", callback=_parse_stages, help="N stages in total, or N-prompted")
@click.option("--threshold", type=click.FloatRange(min=0.0), help="Bank distance that stops the loop")
@click.option("--prompt-site", type=click.Choice(["direction", "position"]))
@click.option("--prompt-source", type=click.Choice(sorted(PROMPT_SOURCES)))
@click.option("--warm-start", type=click.Choice([w.value for w in WarmStart]))
@click.option("--views-per-split", "views", callback=_parse_counts, help="Keep the first train,val,test views")
@run_options
@_guarded
def cascade_cmd(
    data: Path | None,
    out: Path,
    resume: bool,
    arch: str | None,
    stages: int | None,
    threshold: float | None,
    prompt_site: str | None,
    prompt_source: str | None,
    warm_start: str | None,
    views: tuple[int, int, int] | None,
    config_path: Path | None,
    sets: tuple[str, ...],
    seed: int | None,
    workers: int | None,
) -> None:
    """Run (or resume) the stage loop and write metrics.csv."""
    if resume:
        given = {
            "--data": data, "--arch": arch, "--stages": stages, "--threshold": threshold,
            "--prompt-site": prompt_site, "--prompt-source": prompt_source, "--warm-start": warm_start,
            "--views-per-split": views, "--config": config_path, "--seed": seed,
        }
        conflicts = [flag for flag, value in given.items() if value is not None] + (["--set"] if sets else [])
        if conflicts:
            raise click.UsageError(f"--resume reuses the recorded config; drop {', '.join(conflicts)}")
        state = resume_cascade(out, workers)
    else:
        if data is None:
            raise click.UsageError("--data is required unless --resume is given")
        source = PROMPT_SOURCES[prompt_source] if prompt_source else None
        if source not in (None, PromptSourceKind.RENDERED) and stages is not None and stages > 2:
            raise click.UsageError("fixed prompt sources run a single prompted stage; use --stages 1-prompted")
        if source not in (None, PromptSourceKind.RENDERED) and threshold is not None:
            raise click.UsageError("--threshold applies to rendered prompt cascades only")
        extra = [f"cascade.max_stages={stages}"] if stages is not None else []
        if threshold is not None:
            extra.append(f"cascade.stop_threshold={threshold}")
        if prompt_site is not None:
            extra.append(f'cascade.prompt_site="{prompt_site}"')
        if source is not None:
            extra.append(f'cascade.prompt_source="{source.value}"')
        if warm_start is not None:
            extra.append(f'cascade.warm_start="{warm_start}"')
        config = _run_config(config_path, sets, seed, workers, arch, tuple(extra))
        state = run_cascade(_dataset(data, views), config, out, data, views)
    Console().print(_cascade_table(state))


@cli.command("eval")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--split", "split_name", type=click.Choice([s.value for s in ALL_SPLITS]), default="test", show_default=True)
@click.option("--prompts", type=click.Path(exists=True, file_okay=False, path_type=Path), help="Required for prompted checkpoints")
@click.option(
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    help="Directory for metrics.json and metrics_views.csv [default: eval_<split> next to the checkpoint]",
)
@run_options
@_guarded
def eval_cmd(
    checkpoint: Path,
    data: Path,
    split_name: str,
    prompts: Path | None,
    out: Path | None,
    config_path: Path | None,
    sets: tuple[str, ...],
    seed: int | None,
    workers: int | None,
) -> None:
    """Render a split with a checkpoint and score it against ground truth."""
    config = _run_config(config_path, sets, seed, workers)
    ckpt = load_checkpoint(checkpoint)
    bank = _checkpoint_bank(ckpt, prompts)
    dataset = _dataset(data)
    report = evaluate_split(
        ckpt.params, ckpt.arch, dataset, Split(split_name), config.train.render, bank, config.workers, ckpt.stage
    )
    if out is None:
        out = checkpoint.parent / f"eval_{split_name}"
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(report.model_dump_json(indent=2), encoding="utf-8")
    write_view_metrics(out / "metrics_views.csv", [report])
    logger.info("Wrote evaluation", split=split_name, out=str(out))
    Console().print(_report_table([report]))


@cli.command("render")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--view", "view_id", required=True, help="View id, e.g. test_000")
@click.option("--prompts", type=click.Path(exists=True, file_okay=False, path_type=Path), help="Required for prompted checkpoints")
@click.option("--out", required=True, type=click.Path(file_okay=False, path_type=Path))
@run_options
@_guarded
def render_cmd(
    checkpoint: Path,
    data: Path,
    view_id: str,
    prompts: Path | None,
    out: Path,
    config_path: Path | None,
    sets: tuple[str, ...],
    seed: int | None,
    workers: int | None,
) -> None:
    """Render one view to <view>.png, <view>.f32.bin, <view>.depth.png and <view>.depth.f32.bin."""
    config = _run_config(config_path, sets, seed, workers)
    ckpt = load_checkpoint(checkpoint)
    bank = _checkpoint_bank(ckpt, prompts)
    dataset = _dataset(data)
    view = dataset.view(view_id)
    image, depth = render_view(
        ckpt.params, ckpt.arch, dataset.intrinsics, view.pose, config.train.render,
        dataset.t_near, dataset.t_far, prompt_image(bank, view_id), config.workers,
    )
    out.mkdir(parents=True, exist_ok=True)
    write_png(out / f"{view_id}.png", image)
    write_f32(out / f"{view_id}.f32.bin", image)
    write_png(out / f"{view_id}.depth.png", depth_preview(depth, dataset.t_near, dataset.t_far))
    write_f32(out / f"{view_id}.depth.f32.bin", depth)
    logger.info("Rendered view", view=view_id, out=str(out))
    click.echo(str(out / f"{view_id}.png"))


@cli.command("complexity")
@click.option("--arch", type=click.Choice(sorted(ARCH_PRESETS)), default="full", show_default=True)
@click.option("--res", "resolution", type=click.IntRange(min=1), help="Also time one rendered view at this size")
@run_options
@_guarded
def complexity_cmd(
    arch: str,
    resolution: int | None,
    config_path: Path | None,
    sets: tuple[str, ...],
    seed: int | None,
    workers: int | None,
) -> None:
    """Parameter counts per prompt site and render throughput."""
    config = _run_config(config_path, sets, seed, workers, arch)
    report = complexity_report(config.arch, arch, resolution, config.train.render, config.workers)
    table = Table(title=f"Complexity ({arch})")
    table.add_column("prompt site")
    table.add_column("parameters", justify="right")
    table.add_column("overhead", justify="right")
    table.add_row("none", f"{report.params_none:,}", "0")
    table.add_row("direction", f"{report.params_direction:,}", f"{report.direction_overhead:,}")
    table.add_row("position", f"{report.params_position:,}", f"{report.position_overhead:,}")
    console = Console()
    console.print(table)
    if report.frames_per_second is not None:
        console.print(f"{report.frames_per_second:.3f} frames/s at {resolution}x{resolution}")


def main(argv: list[str] | None = None) -> Any:
    """CLI entry point."""
    return cli(argv)


if __name__ == "__main__":
    main()
