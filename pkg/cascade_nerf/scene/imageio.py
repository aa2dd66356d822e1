"""PNG images for inspection and raw float32 sidecars as the authoritative values."""

from pathlib import Path

import numpy as np
import numpy.typing as npt
from PIL import Image

from ..errors import DatasetError

Array = npt.NDArray[np.float64]


def to_float32_precision(image: npt.ArrayLike) -> Array:
    """Round float64 values to the nearest float32 so sidecars store them exactly."""
    return np.asarray(image, dtype=np.float32).astype(np.float64)


def write_png(path: Path, image: npt.ArrayLike) -> None:
    """8-bit PNG of an RGB image in [0, 1] or a single-channel map in [0, 1]."""
    data = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.round(data * 255.0).astype(np.uint8)).save(path, format="PNG")


def read_png(path: Path) -> Array:
    """RGB image scaled to [0, 1]."""
    try:
        with Image.open(path) as img:
            data = np.asarray(img.convert("RGB"), dtype=np.float64)
    except (OSError, ValueError) as e:
        raise DatasetError(path, f"cannot read image: {e}") from e
    return data / 255.0


def depth_preview(depth: npt.ArrayLike, t_near: float, t_far: float) -> Array:
    """Depth mapped to [0, 1] grayscale, near is bright."""
    d = np.asarray(depth, dtype=np.float64)
    return np.clip((t_far - d) / (t_far - t_near), 0.0, 1.0)


def write_f32(path: Path, array: npt.ArrayLike) -> None:
    """Row-major little-endian float32 dump."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(np.ascontiguousarray(array, dtype="<f4").tobytes())


def read_f32(path: Path, shape: tuple[int, ...]) -> Array:
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise DatasetError(path, f"cannot read sidecar: {e}") from e
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise DatasetError(path, f"sidecar holds {len(raw)} bytes, expected {expected} for shape {shape}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)
