"""Coarse-to-fine ray rendering through the radiance-field networks.

Batches are cut into fixed-size chunks and evaluated on a thread pool. All
random draws happen up front and chunk results are reduced in chunk order, so
the worker count never changes a single bit of the output.
"""

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from ..autodiff import ParamStore, Tape, Tensor, add_gradients, backward, forward
from ..errors import UsageError
from ..field.network import field_graph
from ..models.camera import CameraIntrinsics, Ray
from ..models.field import FieldArch, PromptSite
from ..models.render import RenderConfig, RenderResult
from ..scene.camera import ray_bundle
from .composite import composite_graph, expected_depth, segment_deltas
from .sampling import fine_quantiles, inverse_cdf_samples, stratified_samples

Array = npt.NDArray[np.float64]


@dataclass
class RayTrace:
    """Coarse and optional fine results for a ray batch, plus loss and gradients when requested."""

    coarse: RenderResult
    fine: RenderResult | None = None
    loss: float | None = None
    grads: dict[str, Tensor] | None = None

    @property
    def final(self) -> RenderResult:
        """The fine result when present, else the coarse one."""
        return self.fine if self.fine is not None else self.coarse


@dataclass
class _Chunk:
    origins: Array
    directions: Array
    t_coarse: Array
    u_fine: Array
    prompts: Array | None
    targets: Array | None


def photometric_loss_graph(tape: Tape, pred: int, target: int) -> int:
    """Mean squared error between predicted and target colors."""
    return tape.mse(pred, target, name="photometric_loss")


def _pass(
    params: ParamStore,
    arch: FieldArch,
    network: str,
    chunk: _Chunk,
    t: Array,
    cfg: RenderConfig,
    t_far: float,
    with_grad: bool,
) -> tuple[RenderResult, float | None, dict[str, Tensor] | None]:
    rays, samples = t.shape
    n_points = rays * samples
    points = (chunk.origins[:, None, :] + t[..., None] * chunk.directions[:, None, :]).reshape(n_points, 3)
    dirs = np.repeat(chunk.directions, samples, axis=0)

    tape = Tape()
    x_in, d_in = tape.input("x"), tape.input("d")
    inputs: list[Array] = [points, dirs]
    p_in = None
    if chunk.prompts is not None and network in arch.prompted_networks:
        p_in = tape.input("prompt")
        inputs.append(np.repeat(chunk.prompts, samples, axis=0))
    colors, sigmas = field_graph(tape, arch, network, x_in, d_in, p_in, n_points)
    deltas_in = tape.input("deltas")
    inputs.append(segment_deltas(t, t_far))
    rgb, weights, t_final = composite_graph(
        tape,
        tape.reshape(colors, (rays, samples, 3)),
        tape.reshape(sigmas, (rays, samples)),
        deltas_in,
        (rays, samples),
        cfg.white_background,
    )
    loss_node = None
    if chunk.targets is not None:
        target_in = tape.input("target")
        inputs.append(chunk.targets)
        loss_node = photometric_loss_graph(tape, rgb, target_in)
        tape.output = loss_node
    else:
        tape.output = rgb
    forward(tape, inputs, params)

    w = tape.value(weights)
    result = RenderResult(
        rgb=tape.value(rgb),
        depth=expected_depth(w, t, t_far),
        weights=w,
        t_final=tape.value(t_final),
        t_values=t,
    )
    loss = None if loss_node is None else float(tape.value(loss_node))
    grads = backward(tape) if with_grad and loss_node is not None else None
    return result, loss, grads


def _trace_chunk(
    params: ParamStore, arch: FieldArch, chunk: _Chunk, cfg: RenderConfig, t_near: float, t_far: float, with_grad: bool
) -> RayTrace:
    coarse, loss, grads = _pass(params, arch, "coarse", chunk, chunk.t_coarse, cfg, t_far, with_grad)
    if cfg.n_fine == 0:
        return RayTrace(coarse, None, loss, grads)
    t_fine = inverse_cdf_samples(chunk.t_coarse, coarse.weights, chunk.u_fine, t_near, t_far)
    network = "fine" if arch.hierarchical else "coarse"
    fine, fine_loss, fine_grads = _pass(params, arch, network, chunk, t_fine, cfg, t_far, with_grad)
    if loss is not None and fine_loss is not None:
        loss += fine_loss
    if grads is not None and fine_grads is not None:
        add_gradients(grads, fine_grads)
    return RayTrace(coarse, fine, loss, grads)


def _concat(results: Sequence[RenderResult]) -> RenderResult:
    if len(results) == 1:
        return results[0]
    return RenderResult(
        rgb=np.concatenate([r.rgb for r in results]),
        depth=np.concatenate([r.depth for r in results]),
        weights=np.concatenate([r.weights for r in results]),
        t_final=np.concatenate([r.t_final for r in results]),
        t_values=np.concatenate([r.t_values for r in results]),
    )


def render_rays(
    params: ParamStore,
    arch: FieldArch,
    origins: npt.ArrayLike,
    directions: npt.ArrayLike,
    cfg: RenderConfig,
    t_near: float,
    t_far: float,
    prompts: npt.ArrayLike | None = None,
    rng: np.random.Generator | None = None,
    targets: npt.ArrayLike | None = None,
    with_grad: bool = False,
    workers: int = 1,
) -> RayTrace:
    """Render a batch of rays; with targets, also the coarse+fine loss and (optionally) its gradients.

    The batch loss and gradients are chunk values weighted by chunk size, i.e. the
    mean over the whole batch, accumulated in chunk order.
    """
    o = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    d = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    n_rays = o.shape[0]
    if d.shape != o.shape:
        raise UsageError(f"origins {o.shape} and directions {d.shape} differ")
    p = None if prompts is None else np.asarray(prompts, dtype=np.float64).reshape(-1, 3)
    if (p is None) != (arch.prompt_site is PromptSite.NONE):
        raise UsageError(f"prompts must be given iff the field is prompted (site {arch.prompt_site.value})")
    if p is not None and p.shape[0] != n_rays:
        raise UsageError(f"{p.shape[0]} prompts for {n_rays} rays")
    y = None if targets is None else np.asarray(targets, dtype=np.float64).reshape(-1, 3)
    if with_grad and y is None:
        raise UsageError("gradients need target colors")

    t_coarse = stratified_samples(n_rays, t_near, t_far, cfg.n_coarse, cfg.perturb, rng)
    u_fine = fine_quantiles((n_rays,), cfg.n_fine, cfg.perturb, rng)

    chunks = []
    for lo in range(0, n_rays, cfg.chunk_rays):
        sl = slice(lo, min(lo + cfg.chunk_rays, n_rays))
        chunks.append(_Chunk(
            o[sl], d[sl], t_coarse[sl], u_fine[sl],
            None if p is None else p[sl],
            None if y is None else y[sl],
        ))

    def run(chunk: _Chunk) -> RayTrace:
        return _trace_chunk(params, arch, chunk, cfg, t_near, t_far, with_grad)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(run, chunks))
    else:
        traces = [run(chunk) for chunk in chunks]

    loss = None
    grads: dict[str, Tensor] | None = None
    if y is not None:
        loss = 0.0
        for chunk, trace in zip(chunks, traces, strict=True):
            share = chunk.origins.shape[0] / n_rays
            loss += share * (trace.loss or 0.0)
            if with_grad and trace.grads is not None:
                if grads is None:
                    grads = {}
                add_gradients(grads, trace.grads, share)
    fine = None
    if cfg.n_fine > 0:
        fine = _concat([t.fine for t in traces if t.fine is not None])
    return RayTrace(_concat([t.coarse for t in traces]), fine, loss, grads)


def render_ray(
    params: ParamStore,
    arch: FieldArch,
    ray: Ray,
    cfg: RenderConfig,
    prompt_rgb: npt.ArrayLike | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[RenderResult, RenderResult | None]:
    """Coarse and (when n_fine > 0) fine results for one ray."""
    prompts = None if prompt_rgb is None else np.asarray(prompt_rgb, dtype=np.float64)[None]
    trace = render_rays(params, arch, ray.origin[None], ray.direction[None], cfg, ray.t_near, ray.t_far, prompts, rng)

    def single(r: RenderResult) -> RenderResult:
        return RenderResult(r.rgb[0], r.depth[0], r.weights[0], r.t_final[0], r.t_values[0])

    return single(trace.coarse), None if trace.fine is None else single(trace.fine)


def trace_view(
    params: ParamStore,
    arch: FieldArch,
    intrinsics: CameraIntrinsics,
    pose: npt.ArrayLike,
    cfg: RenderConfig,
    t_near: float,
    t_far: float,
    prompt_image: npt.ArrayLike | None = None,
    workers: int = 1,
) -> RenderResult:
    """Final (fine or coarse) result for every pixel of a view, row-major, without jitter."""
    prompts = None
    if prompt_image is not None:
        img = np.asarray(prompt_image, dtype=np.float64)
        if img.shape != (intrinsics.height, intrinsics.width, 3):
            raise UsageError(
                f"prompt image shape {img.shape} does not match {intrinsics.height}x{intrinsics.width} view"
            )
        prompts = img.reshape(-1, 3)
    origins, directions = ray_bundle(intrinsics, pose)
    still = cfg.model_copy(update={"perturb": False})
    return render_rays(params, arch, origins, directions, still, t_near, t_far, prompts, workers=workers).final


def render_view(
    params: ParamStore,
    arch: FieldArch,
    intrinsics: CameraIntrinsics,
    pose: npt.ArrayLike,
    cfg: RenderConfig,
    t_near: float,
    t_far: float,
    prompt_image: npt.ArrayLike | None = None,
    workers: int = 1,
) -> tuple[Array, Array]:
    """(H, W, 3) image and (H, W) expected-depth map of a view."""
    result = trace_view(params, arch, intrinsics, pose, cfg, t_near, t_far, prompt_image, workers)
    h, w = intrinsics.height, intrinsics.width
    return result.rgb.reshape(h, w, 3), result.depth.reshape(h, w)
