"""Sinusoidal positional and directional encoding."""

import numpy as np
import numpy.typing as npt

from .errors import UsageError
from .models.field import EncodingConfig

Array = npt.NDArray[np.float64]


def sincos_pi(y: Array) -> tuple[Array, Array]:
    """sin(pi*y) and cos(pi*y) with exact values at multiples of 1/2.

    The argument is reduced to r in [-1/4, 1/4] around the nearest half-integer n/2
    so that, for example, cos(pi/2) is exactly 0 rather than 6e-17.
    """
    n = np.rint(2.0 * y)
    r = np.pi * (y - 0.5 * n)
    quadrant = np.mod(n, 4.0).astype(np.int64)
    s, c = np.sin(r), np.cos(r)
    sin = np.choose(quadrant, [s, c, -s, -c]) + 0.0
    cos = np.choose(quadrant, [c, -s, -c, s]) + 0.0
    return sin, cos


def frequencies(cfg: EncodingConfig) -> Array:
    """Octave multipliers 2^0 ... 2^(N-1)."""
    return np.asarray(2.0 ** np.arange(cfg.n_freqs), dtype=np.float64)


def encode_array(v: Array, cfg: EncodingConfig) -> Array:
    """Encode the last axis of v; each component expands to [v?, sin_0, cos_0, sin_1, cos_1, ...]."""
    v = np.asarray(v, dtype=np.float64)
    scaled = v[..., :, None] * frequencies(cfg)
    sin, cos = sincos_pi(scaled)
    blocks = np.stack([sin, cos], axis=-1).reshape(*v.shape, 2 * cfg.n_freqs)
    if cfg.include_input:
        blocks = np.concatenate([v[..., None], blocks], axis=-1)
    return blocks.reshape(*v.shape[:-1], cfg.width(v.shape[-1]))


def encode_vjp(v: Array, grad: Array, cfg: EncodingConfig) -> Array:
    """Gradient of sum(grad * encode_array(v)) with respect to v."""
    v = np.asarray(v, dtype=np.float64)
    per_component = 2 * cfg.n_freqs + int(cfg.include_input)
    g = grad.reshape(*v.shape, per_component)
    out = np.zeros_like(v)
    if cfg.include_input:
        out += g[..., 0]
        g = g[..., 1:]
    if cfg.n_freqs:
        freqs = frequencies(cfg)
        sin, cos = sincos_pi(v[..., :, None] * freqs)
        pairs = g.reshape(*v.shape, cfg.n_freqs, 2)
        out += np.sum(np.pi * freqs * (pairs[..., 0] * cos - pairs[..., 1] * sin), axis=-1)
    return out


def encode(v: Array, cfg: EncodingConfig) -> Array:
    """Encode a vector of scalars: the per-point form of encode_array."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise UsageError("encode requires finite components")
    return encode_array(v, cfg)
