"""The radiance-field MLP and its prompt-conditioned variants.

Layout of one network (names carry a 'coarse.' or 'fine.' prefix):

    trunk.0 ... trunk.{D-1}   relu layers over PE(x); trunk.{skip_at} also sees PE(x) again
    sigma                     trunk -> 1, softplus
    feature                   trunk -> trunk_width, linear
    dir                       [feature, DE(d)] -> dir_branch_width, relu
    rgb                       dir -> 3, sigmoid

A prompt enters through '<layer>.prompt_weight' (out, 3): on 'dir' for the
direction site, on 'trunk.0' for the position site. The term is added to the
layer's pre-activation, so a zero prompt_weight reproduces the unprompted layer.
"""

import math

import numpy as np
import numpy.typing as npt

from ..autodiff import NodeId, ParamStore, Tape, forward
from ..errors import IncompatibleParamsError, UsageError
from ..models.field import FieldArch, PromptSite, RadianceOutput
from ..rng import make_rng

Array = npt.NDArray[np.float64]

PROMPT_SUFFIX = ".prompt_weight"


def prompt_layer(arch: FieldArch) -> str | None:
    """Layer that receives the prompt columns, if any."""
    if arch.prompt_site is PromptSite.DIRECTION:
        return "dir"
    if arch.prompt_site is PromptSite.POSITION:
        return "trunk.0"
    return None


def _trunk_inputs(arch: FieldArch, layer: int) -> int:
    if layer == 0:
        return arch.pos_width
    if layer == arch.skip_at:
        return arch.trunk_width + arch.pos_width
    return arch.trunk_width


def layer_shapes(arch: FieldArch) -> dict[str, tuple[int, int]]:
    """(out, in) of every affine layer of one network, prompt columns excluded."""
    shapes = {f"trunk.{i}": (arch.trunk_width, _trunk_inputs(arch, i)) for i in range(arch.trunk_depth)}
    shapes["sigma"] = (1, arch.trunk_width)
    shapes["feature"] = (arch.trunk_width, arch.trunk_width)
    shapes["dir"] = (arch.dir_branch_width, arch.trunk_width + arch.dir_width)
    shapes["rgb"] = (3, arch.dir_branch_width)
    return shapes


def param_shapes(arch: FieldArch) -> dict[str, tuple[int, ...]]:
    """Every tensor of the network pair in canonical order."""
    prompted = prompt_layer(arch)
    shapes: dict[str, tuple[int, ...]] = {}
    for net in arch.networks:
        for layer, (out, inp) in layer_shapes(arch).items():
            shapes[f"{net}.{layer}.weight"] = (out, inp)
            shapes[f"{net}.{layer}.bias"] = (out,)
            if layer == prompted and net in arch.prompted_networks:
                shapes[f"{net}.{layer}{PROMPT_SUFFIX}"] = (out, arch.prompt_dim)
    return shapes


def param_count(arch: FieldArch) -> int:
    """Closed-form number of scalar parameters of the network pair."""
    w, d, p = arch.trunk_width, arch.trunk_depth, arch.pos_width
    skip = p if 0 < arch.skip_at else 0
    trunk = (w * p + w) + (d - 1) * (w * w + w) + w * skip
    heads = (w + 1) + (w * w + w)
    branch = arch.dir_branch_width * (w + arch.dir_width) + arch.dir_branch_width
    rgb = 3 * arch.dir_branch_width + 3
    prompt = 0
    if arch.prompt_site is PromptSite.DIRECTION:
        prompt = arch.prompt_dim * arch.dir_branch_width
    elif arch.prompt_site is PromptSite.POSITION:
        prompt = arch.prompt_dim * w
    return len(arch.networks) * (trunk + heads + branch + rgb) + len(arch.prompted_networks) * prompt


def _fresh_tensor(name: str, shape: tuple[int, ...], fan_in: int, seed: int) -> Array:
    if name.endswith(".bias"):
        return np.zeros(shape)
    bound = 1.0 / math.sqrt(fan_in)
    return make_rng(seed, "init", name).uniform(-bound, bound, size=shape)


def init_params(arch: FieldArch, seed: int, warm_from: ParamStore | None = None) -> ParamStore:
    """Fan-in-scaled uniform weights with zero biases, or a warm start.

    A warm start copies every tensor from warm_from. Prompt columns absent from
    warm_from start at zero; any other missing tensor or shape change is an error.
    """
    prompted = prompt_layer(arch)
    inputs = {layer: inp for layer, (_, inp) in layer_shapes(arch).items()}
    store = ParamStore()
    for name, shape in param_shapes(arch).items():
        net, rest = name.split(".", 1)
        layer = rest.rsplit(".", 1)[0]
        if warm_from is None:
            with_prompt = layer == prompted and net in arch.prompted_networks
            fan_in = inputs[layer] + (arch.prompt_dim if with_prompt else 0)
            store[name] = _fresh_tensor(name, shape, fan_in, seed)
            continue
        if name in warm_from:
            source = warm_from[name]
            if source.shape != shape:
                raise IncompatibleParamsError(name, f"shape {source.shape} does not fit {shape}")
            store[name] = source.copy()
        elif name.endswith(PROMPT_SUFFIX):
            store[name] = np.zeros(shape)
        else:
            raise IncompatibleParamsError(name, "missing from the warm-start parameters")
    if warm_from is not None:
        extra = sorted(set(warm_from) - set(store))
        if extra:
            raise IncompatibleParamsError(extra[0], "not part of the target architecture")
    return store


def _layer(tape: Tape, x: NodeId, prefix: str, prompt: NodeId | None = None) -> NodeId:
    out = tape.linear(x, prefix)
    if prompt is not None:
        term = tape.affine(prompt, tape.param(prefix + PROMPT_SUFFIX), None, name=prefix + ".prompt")
        out = tape.add(out, term, name=prefix + ".pre")
    return out


def field_graph(
    tape: Tape, arch: FieldArch, network: str, x: NodeId, d: NodeId, prompt: NodeId | None, n_points: int
) -> tuple[NodeId, NodeId]:
    """Record one network over points x (P, 3), unit directions d (P, 3) and prompts (P, 3).

    Returns nodes for colors (P, 3) and densities (P,).
    """
    if (prompt is None) == (network in arch.prompted_networks):
        raise UsageError(
            f"network '{network}' takes a prompt input iff it is prompted (site {arch.prompt_site.value})"
        )
    site = arch.prompt_site
    pe = tape.posenc(tape.scale(x, 1.0 / arch.scene_bound), arch.pos_encoding, name=f"{network}.pe")
    h = tape.relu(_layer(tape, pe, f"{network}.trunk.0", prompt if site is PromptSite.POSITION else None))
    for i in range(1, arch.trunk_depth):
        inp = tape.concat([h, pe]) if i == arch.skip_at else h
        h = tape.relu(_layer(tape, inp, f"{network}.trunk.{i}"))

    raw_sigma = tape.reshape(tape.linear(h, f"{network}.sigma"), (n_points,))
    sigma = tape.softplus(raw_sigma, name=f"{network}.density")

    feature = tape.linear(h, f"{network}.feature")
    de = tape.posenc(d, arch.dir_encoding, name=f"{network}.de")
    branch = _layer(tape, tape.concat([feature, de]), f"{network}.dir", prompt if site is PromptSite.DIRECTION else None)
    rgb = tape.sigmoid(tape.linear(tape.relu(branch), f"{network}.rgb"), name=f"{network}.color")
    return rgb, sigma


def query_points(
    params: ParamStore,
    arch: FieldArch,
    x: npt.ArrayLike,
    d: npt.ArrayLike,
    prompt_rgb: npt.ArrayLike | None = None,
    network: str = "coarse",
) -> tuple[Array, Array]:
    """Colors (P, 3) and densities (P,) at many points."""
    if network not in arch.networks:
        raise UsageError(f"architecture has no '{network}' network")
    points = np.asarray(x, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(d, dtype=np.float64).reshape(-1, 3)
    tape = Tape()
    x_in, d_in = tape.input("x"), tape.input("d")
    inputs = [points, dirs]
    p_in = None
    if prompt_rgb is not None:
        p_in = tape.input("prompt")
        inputs.append(np.asarray(prompt_rgb, dtype=np.float64).reshape(-1, 3))
    rgb, sigma = field_graph(tape, arch, network, x_in, d_in, p_in, points.shape[0])
    tape.output = rgb
    forward(tape, inputs, params)
    return tape.value(rgb), tape.value(sigma)


def query(
    params: ParamStore,
    arch: FieldArch,
    x: npt.ArrayLike,
    d: npt.ArrayLike,
    prompt_rgb: npt.ArrayLike | None = None,
    network: str = "coarse",
) -> RadianceOutput:
    """(c, sigma) at a single point seen along direction d."""
    if prompt_rgb is not None:
        p = np.asarray(prompt_rgb, dtype=np.float64)
        if p.shape != (3,) or np.any(p < 0.0) or np.any(p > 1.0):
            raise UsageError("prompt_rgb must be an RGB triple in [0, 1]")
    colors, sigmas = query_points(params, arch, [x], [d], None if prompt_rgb is None else [prompt_rgb], network)
    return RadianceOutput(color=colors[0], density=float(sigmas[0]))
