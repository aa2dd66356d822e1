"""Prompt banks: per-view RGB images that condition the next cascade stage."""

import hashlib
import json
from collections.abc import Sequence
from pathlib import Path

import numpy as np
import numpy.typing as npt
import structlog

from ..autodiff import ParamStore
from ..errors import IntegrityError, MissingPromptBankError, PixelRangeError, UsageError
from ..models.field import FieldArch
from ..models.prompt import BankManifest, BankViewEntry, PromptBank, PromptSource, PromptSourceKind
from ..models.render import RenderConfig
from ..models.scene import SceneDataset, Split
from ..observability import get_tracer
from ..render.renderer import render_view
from ..rng import make_rng
from ..scene.imageio import read_f32, to_float32_precision, write_f32, write_png

logger = structlog.get_logger(__name__)
tracer = get_tracer(__name__)

MANIFEST = "manifest.json"


def _split_ids(dataset: SceneDataset, splits: Sequence[Split]) -> dict[Split, list[str]]:
    if not splits:
        raise UsageError("a prompt bank needs at least one split")
    return {split: list(dataset.splits.get(split, [])) for split in splits}


def check_coverage(bank: PromptBank, dataset: SceneDataset, splits: Sequence[Split]) -> None:
    """Raise unless bank holds an image of the dataset's resolution for every view of splits."""
    shape = (dataset.intrinsics.height, dataset.intrinsics.width, 3)
    for split in splits:
        for view_id in dataset.splits.get(split, []):
            image = bank.images.get(view_id)
            if image is None:
                raise UsageError(f"prompt bank {bank.tag} has no image for view '{view_id}'")
            if image.shape != shape:
                raise UsageError(f"prompt bank image for '{view_id}' has shape {image.shape}, expected {shape}")


def prompt_image(bank: PromptBank | None, view_id: str) -> npt.NDArray[np.float64] | None:
    if bank is None:
        return None
    try:
        return bank.images[view_id]
    except KeyError:
        raise UsageError(f"prompt bank {bank.tag} has no view '{view_id}'") from None


def build_bank(
    params: ParamStore,
    arch: FieldArch,
    dataset: SceneDataset,
    cfg: RenderConfig,
    splits: Sequence[Split],
    stage: int,
    prompts: PromptBank | None = None,
    checkpoint_hash: str | None = None,
    workers: int = 1,
) -> PromptBank:
    """Render every view of splits with the stage's field; prompted fields read their own input bank."""
    if arch.prompt_dim and prompts is None:
        raise MissingPromptBankError(stage)
    ids = _split_ids(dataset, splits)
    if prompts is not None:
        check_coverage(prompts, dataset, splits)
    images = {}
    with tracer.start_as_current_span("build_bank") as span:
        span.set_attribute("stage", stage)
        for split_ids in ids.values():
            for view_id in split_ids:
                view = dataset.view(view_id)
                image, _ = render_view(
                    params, arch, dataset.intrinsics, view.pose, cfg,
                    dataset.t_near, dataset.t_far, prompt_image(prompts, view_id), workers,
                )
                images[view_id] = to_float32_precision(np.clip(image, 0.0, 1.0))
        span.set_attribute("views", len(images))
    logger.info("Built prompt bank", stage=stage, views=len(images))
    return PromptBank(
        stage=stage,
        source=PromptSourceKind.RENDERED,
        images=images,
        splits=ids,
        checkpoint_hash=checkpoint_hash,
        resolution=(dataset.intrinsics.width, dataset.intrinsics.height),
    )


def synth_bank(source: PromptSource, dataset: SceneDataset, splits: Sequence[Split]) -> PromptBank:
    """Ground-truth copies or clipped Gaussian noise images for every view of splits."""
    ids = _split_ids(dataset, splits)
    shape = (dataset.intrinsics.height, dataset.intrinsics.width, 3)
    images = {}
    for split, split_ids in ids.items():
        if source.kind is PromptSourceKind.GROUND_TRUTH:
            if not split_ids:
                raise UsageError(f"no ground-truth images for split {split.value}")
            for view_id in split_ids:
                images[view_id] = to_float32_precision(dataset.view(view_id).image)
        elif source.kind is PromptSourceKind.GAUSSIAN_NOISE:
            for view_id in split_ids:
                rng = make_rng(source.seed, "noise", view_id)
                noise = rng.normal(source.mean, source.stddev, size=shape)
                images[view_id] = to_float32_precision(np.clip(noise, 0.0, 1.0))
        else:
            raise UsageError("rendered banks come from build_bank")
    return PromptBank(
        stage=None,
        source=source.kind,
        images=images,
        splits=ids,
        resolution=(dataset.intrinsics.width, dataset.intrinsics.height),
    )


def lookup(bank: PromptBank, view_id: str, u: int, v: int) -> npt.NDArray[np.float64]:
    """Stored RGB of pixel (u, v); no interpolation."""
    image = bank.images.get(view_id)
    if image is None:
        raise UsageError(f"prompt bank {bank.tag} has no view '{view_id}'")
    height, width = image.shape[:2]
    if not (0 <= u < width and 0 <= v < height):
        raise PixelRangeError(u, v, width, height)
    return image[v, u].copy()


def bank_distance(a: PromptBank, b: PromptBank) -> float:
    """Mean absolute per-channel difference over all views."""
    if set(a.images) != set(b.images):
        raise UsageError(f"banks {a.tag} and {b.tag} cover different views")
    total = 0.0
    count = 0
    for view_id in sorted(a.images):
        x, y = a.images[view_id], b.images[view_id]
        if x.shape != y.shape:
            raise UsageError(f"view '{view_id}' has shapes {x.shape} and {y.shape}")
        total += float(np.abs(x - y).sum())
        count += x.size
    if count == 0:
        raise UsageError("banks are empty")
    return total / count


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save_bank(bank: PromptBank, root: Path) -> None:
    """Write {split}/{view}.f32.bin (authoritative), {split}/{view}.png and manifest.json."""
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for split, ids in bank.splits.items():
        for view_id in ids:
            sidecar = root / split.value / f"{view_id}.f32.bin"
            write_f32(sidecar, bank.images[view_id])
            write_png(root / split.value / f"{view_id}.png", bank.images[view_id])
            entries.append(BankViewEntry(id=view_id, split=split, sha256=_sha256(sidecar)))
    width, height = bank.resolution
    manifest = BankManifest(
        stage=bank.stage,
        source=bank.source,
        checkpoint_hash=bank.checkpoint_hash,
        width=width,
        height=height,
        views=entries,
    )
    (root / MANIFEST).write_text(
        json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_bank(root: Path) -> PromptBank:
    """Read a saved bank, verifying every sidecar against the manifest."""
    try:
        manifest = BankManifest.model_validate_json((root / MANIFEST).read_text(encoding="utf-8"))
    except OSError as e:
        raise IntegrityError(f"{root}: cannot read {MANIFEST}: {e}") from e
    except ValueError as e:
        raise IntegrityError(f"{root / MANIFEST}: malformed manifest: {e}") from e
    images = {}
    splits: dict[Split, list[str]] = {}
    shape = (manifest.height, manifest.width, 3)
    for entry in manifest.views:
        sidecar = root / entry.split.value / f"{entry.id}.f32.bin"
        if not sidecar.is_file():
            raise IntegrityError(f"{sidecar}: listed in the manifest but missing")
        if _sha256(sidecar) != entry.sha256:
            raise IntegrityError(f"{sidecar}: contents do not match the manifest hash")
        images[entry.id] = read_f32(sidecar, shape)
        splits.setdefault(entry.split, []).append(entry.id)
    return PromptBank(
        stage=manifest.stage,
        source=manifest.source,
        images=images,
        splits=splits,
        checkpoint_hash=manifest.checkpoint_hash,
        resolution=(manifest.width, manifest.height),
    )
