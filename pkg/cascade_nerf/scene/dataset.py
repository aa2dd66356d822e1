"""Blender-style dataset directories: generation, loading, hashing and subsampling.

Layout::

    transforms_{train,val,test}.json   camera_angle_x + frames[file_path, transform_matrix]
    images/<view>.png                  8-bit copies for inspection
    images_f32/<view>.bin              authoritative H x W x 3 float32 images
    depth_f32/<view>.bin               optional H x W float32 depth
    scene.meta.json                    scene name, resolution, bounds, seed
"""

import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np
import structlog

from ..errors import DatasetError, UsageError
from ..models.camera import CameraIntrinsics
from ..models.scene import ALL_SPLITS, SceneDataset, SceneMeta, SceneSpec, Split, View
from ..rng import make_rng
from .analytic import get_scene
from .camera import check_pose, hemisphere_poses
from .imageio import read_f32, read_png, to_float32_precision, write_f32, write_png
from .oracle import oracle_render

logger = structlog.get_logger(__name__)

META_FILE = "scene.meta.json"
DEFAULT_BOUNDS = (2.0, 6.0)


def transforms_file(root: Path, split: Split) -> Path:
    return root / f"transforms_{split.value}.json"


def _write_json(path: Path, payload: Any) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def save_dataset(dataset: SceneDataset, root: Path, quadrature_n: int | None = None) -> str:
    """Write the dataset directory and return its hash."""
    root.mkdir(parents=True, exist_ok=True)
    for split in ALL_SPLITS:
        frames = []
        for view in dataset.views_in(split):
            frames.append({"file_path": f"./images/{view.id}", "transform_matrix": view.pose.tolist()})
            write_png(root / "images" / f"{view.id}.png", view.image)
            write_f32(root / "images_f32" / f"{view.id}.bin", view.image)
            if view.depth is not None:
                write_f32(root / "depth_f32" / f"{view.id}.bin", view.depth)
        _write_json(transforms_file(root, split), {"camera_angle_x": dataset.intrinsics.fov_x, "frames": frames})
    meta = SceneMeta(
        scene=dataset.name,
        width=dataset.intrinsics.width,
        height=dataset.intrinsics.height,
        t_near=dataset.t_near,
        t_far=dataset.t_far,
        scene_bound=dataset.scene_bound,
        seed=dataset.seed,
        quadrature_n=quadrature_n,
    )
    _write_json(root / META_FILE, meta.model_dump(mode="json"))
    return dataset_hash(root)


def _read_json(path: Path) -> Any:
    if not path.is_file():
        raise DatasetError(path, "file is missing")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise DatasetError(path, f"malformed JSON: {e}") from e


def _image_path(root: Path, file_path: str) -> Path:
    path = root / file_path
    return path if path.suffix else path.with_suffix(".png")


def load_dataset(root: Path) -> SceneDataset:
    """Parse a dataset directory; float32 sidecars take precedence over PNGs."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(root, "dataset directory does not exist")
    meta = None
    if (root / META_FILE).is_file():
        try:
            meta = SceneMeta.model_validate(_read_json(root / META_FILE))
        except ValueError as e:
            raise DatasetError(root / META_FILE, str(e)) from e

    fov_x: float | None = None
    shape: tuple[int, ...] | None = None
    views: list[View] = []
    splits: dict[Split, list[str]] = {}
    for split in ALL_SPLITS:
        path = transforms_file(root, split)
        payload = _read_json(path)
        try:
            split_fov = float(payload["camera_angle_x"])
            frames = list(payload["frames"])
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetError(path, f"expected camera_angle_x and frames: {e}") from e
        if fov_x is None:
            fov_x = split_fov
        elif split_fov != fov_x:
            raise DatasetError(path, f"camera_angle_x {split_fov} differs from {fov_x}")
        ids = []
        for frame in frames:
            try:
                file_path = str(frame["file_path"])
                pose = check_pose(frame["transform_matrix"], str(path))
            except (KeyError, TypeError, ValueError) as e:
                raise DatasetError(path, f"malformed frame: {e}") from e
            png = _image_path(root, file_path)
            view_id = png.stem
            image = read_png(png)
            if shape is None:
                shape = image.shape
            elif image.shape != shape:
                raise DatasetError(png, f"resolution {image.shape[:2]} differs from {shape[:2]}")
            sidecar = root / "images_f32" / f"{view_id}.bin"
            if sidecar.is_file():
                image = read_f32(sidecar, image.shape)
                if np.any(image < 0.0) or np.any(image > 1.0):
                    raise DatasetError(sidecar, "image values outside [0, 1]")
            depth_file = root / "depth_f32" / f"{view_id}.bin"
            depth = read_f32(depth_file, image.shape[:2]) if depth_file.is_file() else None
            views.append(View(view_id, pose, image, depth))
            ids.append(view_id)
        splits[split] = ids
    if shape is None or fov_x is None:
        raise DatasetError(root, "dataset has no views")
    if meta is not None and (meta.width, meta.height) != (shape[1], shape[0]):
        raise DatasetError(root / META_FILE, f"resolution {meta.width}x{meta.height} differs from images")
    try:
        return SceneDataset(
            intrinsics=CameraIntrinsics(width=shape[1], height=shape[0], fov_x=fov_x),
            views=views,
            splits=splits,
            bounds=(meta.t_near, meta.t_far) if meta else DEFAULT_BOUNDS,
            scene_bound=meta.scene_bound if meta else 1.5,
            name=meta.scene if meta else root.name,
            seed=meta.seed if meta else None,
        )
    except (UsageError, ValueError) as e:
        raise DatasetError(root, str(e)) from e


def gen_scene(spec: SceneSpec, out: Path) -> SceneDataset:
    """Render an analytic scene from hemisphere poses and write it to out."""
    field = get_scene(spec.scene)
    if not 0.0 < spec.t_near < spec.t_far:
        raise UsageError(f"bounds must satisfy 0 < t_near < t_far, got ({spec.t_near}, {spec.t_far})")
    intrinsics = CameraIntrinsics(width=spec.resolution, height=spec.resolution, fov_x=spec.fov_x)
    views: list[View] = []
    splits: dict[Split, list[str]] = {}
    for split, count in spec.counts.items():
        rng = make_rng(spec.seed, "poses", split.value)
        ids = []
        for i, pose in enumerate(hemisphere_poses(count, spec.camera_radius, rng)):
            image, depth = oracle_render(field, intrinsics, pose, spec.quadrature_n, spec.t_near, spec.t_far)
            view_id = f"{split.value}_{i:03d}"
            views.append(View(view_id, pose, to_float32_precision(image), to_float32_precision(depth)))
            ids.append(view_id)
        splits[split] = ids
    dataset = SceneDataset(
        intrinsics=intrinsics,
        views=views,
        splits=splits,
        bounds=(spec.t_near, spec.t_far),
        scene_bound=field.bound_radius,
        name=spec.scene,
        seed=spec.seed,
    )
    digest = save_dataset(dataset, out, spec.quadrature_n)
    logger.info("Generated scene", scene=spec.scene, views=len(views), resolution=spec.resolution, path=str(out), hash=digest)
    return dataset


def dataset_hash(root: Path) -> str:
    """sha256 over every file of the dataset directory (relative path and contents)."""
    digest = hashlib.sha256()
    for path in sorted(p for p in Path(root).rglob("*") if p.is_file()):
        digest.update(path.relative_to(root).as_posix().encode("utf-8") + b"\0")
        digest.update(path.read_bytes())
    return digest.hexdigest()


def subsample_dataset(dataset: SceneDataset, counts: tuple[int, int, int]) -> SceneDataset:
    """Keep the first n views of each split (train, val, test)."""
    keep: dict[Split, list[str]] = {}
    for split, n in zip(ALL_SPLITS, counts, strict=True):
        ids = dataset.splits.get(split, [])
        if not 1 <= n <= len(ids):
            raise UsageError(f"cannot keep {n} of {len(ids)} {split.value} views")
        keep[split] = ids[:n]
    kept = {view_id for ids in keep.values() for view_id in ids}
    return SceneDataset(
        intrinsics=dataset.intrinsics,
        views=[v for v in dataset.views if v.id in kept],
        splits=keep,
        bounds=dataset.bounds,
        scene_bound=dataset.scene_bound,
        name=dataset.name,
        seed=dataset.seed,
    )
