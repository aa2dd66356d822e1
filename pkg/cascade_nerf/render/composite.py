"""Discrete volume-rendering quadrature along rays.

For samples t_i with spacing delta_i = t_{i+1} - t_i (the last one closed by t_far):

    T_i = exp(-sum_{j<i} sigma_j delta_j)
    w_i = T_i (1 - exp(-sigma_i delta_i))
    rgb = sum_i w_i c_i + T_final * background
"""

import numpy as np
import numpy.typing as npt

from ..autodiff import NodeId, ParamStore, Tape, forward
from ..errors import UsageError
from ..models.render import RenderResult

Array = npt.NDArray[np.float64]

DEPTH_EPS = 1e-10
VALID_WEIGHT = 0.5


def segment_deltas(t: Array, t_far: float) -> Array:
    """Spacing between consecutive samples; the last segment ends at t_far."""
    t = np.asarray(t, dtype=np.float64)
    if t.shape[-1] == 0:
        raise UsageError("composite needs at least one sample per ray")
    diffs = np.diff(t, axis=-1)
    if np.any(diffs < 0.0):
        raise UsageError("sample distances must be non-decreasing along each ray")
    last = t_far - t[..., -1:]
    if np.any(last < 0.0):
        raise UsageError(f"samples lie beyond t_far={t_far}")
    return np.concatenate([diffs, last], axis=-1)


def composite_graph(
    tape: Tape, colors: NodeId, sigmas: NodeId, deltas: NodeId, shape: tuple[int, int], white_background: bool
) -> tuple[NodeId, NodeId, NodeId]:
    """Record compositing on a tape; colors (R, S, 3), sigmas and deltas (R, S) with shape = (R, S).

    Returns the rgb (R, 3), weights (R, S) and residual transmittance (R,) nodes.
    """
    sd = tape.mul(sigmas, deltas, name="optical_depth")
    transmittance = tape.exp(tape.neg(tape.cumsum_exclusive(sd)), name="transmittance")
    survive = tape.exp(tape.neg(sd))
    ones = tape.constant(np.ones(shape), name="ones")
    alpha = tape.add(ones, tape.neg(survive), name="alpha")
    weights = tape.mul(transmittance, alpha, name="weights")
    rgb = tape.sum(tape.mul(tape.expand(weights, 3), colors), axis=-2, name="rgb_samples")
    t_final = tape.exp(tape.neg(tape.sum(sd, axis=-1)), name="t_final")
    if white_background:
        rgb = tape.add(rgb, tape.expand(t_final, 3), name="rgb")
    return rgb, weights, t_final


def expected_depth(weights: Array, t: Array, t_far: float) -> Array:
    """sum(w t) / max(sum(w), eps); rays with no weight at all report t_far."""
    acc = weights.sum(axis=-1)
    depth = (weights * t).sum(axis=-1) / np.maximum(acc, DEPTH_EPS)
    return np.where(acc < DEPTH_EPS, t_far, depth)


def composite(
    colors: npt.ArrayLike,
    sigmas: npt.ArrayLike,
    t: npt.ArrayLike,
    t_far: float,
    white_background: bool = True,
) -> RenderResult:
    """Composite per-sample colors and densities; leading axes are ray axes.

    Shares its arithmetic with the recorded graph so direct calls and the
    renderer agree bit for bit.
    """
    c = np.asarray(colors, dtype=np.float64)
    s = np.asarray(sigmas, dtype=np.float64)
    tv = np.asarray(t, dtype=np.float64)
    if c.shape != (*s.shape, 3) or s.shape != tv.shape:
        raise UsageError(f"composite expects colors (..., S, 3) and sigmas/t (..., S); got {c.shape}, {s.shape}, {tv.shape}")
    if np.any(s < 0.0):
        raise UsageError("densities must be non-negative")
    lead = s.shape[:-1]
    n = s.shape[-1]
    deltas = segment_deltas(tv, t_far)
    rows = int(np.prod(lead)) if lead else 1

    tape = Tape()
    colors_in = tape.input("colors")
    sigmas_in = tape.input("sigmas")
    deltas_in = tape.input("deltas")
    rgb, weights, t_final = composite_graph(tape, colors_in, sigmas_in, deltas_in, (rows, n), white_background)
    tape.output = rgb
    forward(
        tape,
        [c.reshape(rows, n, 3), s.reshape(rows, n), deltas.reshape(rows, n)],
        ParamStore(),
    )
    w = tape.value(weights).reshape(*lead, n)
    return RenderResult(
        rgb=tape.value(rgb).reshape(*lead, 3),
        depth=expected_depth(w, tv, t_far),
        weights=w,
        t_final=tape.value(t_final).reshape(lead),
        t_values=tv,
    )
