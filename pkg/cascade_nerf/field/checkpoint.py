"""Checkpoint file: magic, JSON header, then little-endian float64 tensors."""

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..autodiff import ParamStore
from ..errors import IntegrityError
from ..models.field import FieldArch
from .network import param_shapes

MAGIC = b"CNERFCK1"
_LENGTH = struct.Struct("<I")


@dataclass
class Checkpoint:
    """Trained parameters with the architecture and provenance they belong to."""

    arch: FieldArch
    params: ParamStore
    stage: int = 0
    seed: int = 0
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def prompted(self) -> bool:
        return self.arch.prompt_dim > 0


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    """Serialize to bytes; equal checkpoints give equal bytes."""
    table = []
    offset = 0
    blobs = []
    for name, tensor in ckpt.params.items():
        blob = np.ascontiguousarray(tensor, dtype="<f8").tobytes()
        table.append({"name": name, "shape": list(tensor.shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = {
        "arch": ckpt.arch.model_dump(mode="json"),
        "stage": ckpt.stage,
        "seed": ckpt.seed,
        "metadata": ckpt.metadata,
        "tensors": table,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join([MAGIC, _LENGTH.pack(len(header_bytes)), header_bytes, *blobs])


def decode_checkpoint(data: bytes, source: str = "<bytes>") -> Checkpoint:
    if not data.startswith(MAGIC):
        raise IntegrityError(f"{source}: not a checkpoint file")
    start = len(MAGIC) + _LENGTH.size
    if len(data) < start:
        raise IntegrityError(f"{source}: truncated header")
    (length,) = _LENGTH.unpack_from(data, len(MAGIC))
    try:
        header = json.loads(data[start : start + length].decode("utf-8"))
        arch = FieldArch.model_validate(header["arch"])
        table = header["tensors"]
        stage, seed, metadata = int(header["stage"]), int(header["seed"]), dict(header["metadata"])
        if not isinstance(table, list):
            raise ValueError("'tensors' is not a list")
    except (ValueError, KeyError, TypeError) as e:
        raise IntegrityError(f"{source}: malformed header: {e}") from e
    body = data[start + length :]
    params = ParamStore()
    expected_end = 0
    for index, entry in enumerate(table):
        name = entry.get("name", f"#{index}") if isinstance(entry, dict) else f"#{index}"
        try:
            lo, hi = int(entry["offset"]), int(entry["offset"]) + int(entry["nbytes"])
            shape = tuple(int(n) for n in entry["shape"])
        except (KeyError, TypeError, ValueError) as e:
            raise IntegrityError(f"{source}: tensor '{name}' has a malformed table entry: {e!r}") from e
        if lo < 0 or hi > len(body):
            raise IntegrityError(f"{source}: tensor '{name}' runs past end of file")
        try:
            params[name] = np.frombuffer(body[lo:hi], dtype="<f8").reshape(shape).astype(np.float64)
        except ValueError as e:
            raise IntegrityError(f"{source}: tensor '{name}' does not fit its shape {list(shape)}") from e
        expected_end = max(expected_end, hi)
    if expected_end != len(body):
        raise IntegrityError(f"{source}: {len(body) - expected_end} trailing bytes")
    expected = param_shapes(arch)
    actual = {name: t.shape for name, t in params.items()}
    if actual != expected:
        raise IntegrityError(f"{source}: tensors do not match the recorded architecture")
    return Checkpoint(arch, params, stage, seed, metadata)


def save_checkpoint(path: Path, ckpt: Checkpoint) -> str:
    """Write the checkpoint and return its sha256."""
    data = encode_checkpoint(ckpt)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load_checkpoint(path: Path) -> Checkpoint:
    try:
        data = path.read_bytes()
    except OSError as e:
        raise IntegrityError(f"{path}: cannot read checkpoint: {e}") from e
    return decode_checkpoint(data, str(path))


def checkpoint_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()
