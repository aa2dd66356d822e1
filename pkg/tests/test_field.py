"""Tests for the radiance-field network and parameter initialization."""

import math

import numpy as np
import pytest

from cascade_nerf.autodiff import ParamStore
from cascade_nerf.errors import IncompatibleParamsError, UsageError
from cascade_nerf.field.network import init_params, param_count, param_shapes, query, query_points
from cascade_nerf.models.field import ARCH_PRESETS, FieldArch, PromptSite


def _zeros(arch: FieldArch) -> ParamStore:
    return ParamStore.from_mapping({name: np.zeros(shape) for name, shape in param_shapes(arch).items()})


def _random_inputs(n: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.2, 1.2, size=(n, 3))
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    return x, d, rng.uniform(size=(n, 3))


class TestQuery:
    """Evaluating the network at points."""

    def test_zero_network(self) -> None:
        """All-zero parameters give softplus(0) density and mid-grey color."""
        arch = FieldArch.desk()
        out = query(_zeros(arch), arch, [0.1, 0.2, 0.3], [0.0, 0.0, -1.0])
        assert out.density == pytest.approx(math.log(2.0), abs=1e-15)
        np.testing.assert_array_equal(out.color, [0.5, 0.5, 0.5])

    def test_prompt_drives_color(self, tiny_arch: FieldArch) -> None:
        """With only the prompt columns feeding the color head, color tracks the prompt."""
        arch = tiny_arch.with_prompt(PromptSite.DIRECTION)
        params = _zeros(arch)
        for i in range(3):
            params["coarse.dir.prompt_weight"][i, i] = 10.0
            params["coarse.rgb.weight"][i, i] = 1.0
        reds = [query(params, arch, [0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [r, 0.5, 0.5]).color[0] for r in (0.0, 0.3, 0.6, 1.0)]
        assert all(a < b for a, b in zip(reds, reds[1:], strict=False))

    def test_warm_start_ignores_prompt(self, tiny_arch: FieldArch) -> None:
        """A warm-started prompted network reproduces the unprompted one exactly."""
        base = init_params(tiny_arch, seed=3)
        for site in (PromptSite.DIRECTION, PromptSite.POSITION):
            arch = tiny_arch.with_prompt(site)
            warm = init_params(arch, seed=99, warm_from=base)
            x, d, prompts = _random_inputs(20, 4)
            for network in arch.networks:
                c0, s0 = query_points(base, tiny_arch, x, d, None, network)
                c1, s1 = query_points(warm, arch, x, d, prompts, network)
                np.testing.assert_array_equal(c1, c0)
                np.testing.assert_array_equal(s1, s0)

    def test_density_ignores_direction_and_prompt(self, tiny_arch: FieldArch) -> None:
        """At the direction site, sigma depends on position only."""
        arch = tiny_arch.with_prompt(PromptSite.DIRECTION)
        params = init_params(arch, seed=5)
        x, d, prompts = _random_inputs(16, 6)
        _, d2, prompts2 = _random_inputs(16, 7)
        _, sigma = query_points(params, arch, x, d, prompts)
        _, sigma2 = query_points(params, arch, x, d2, prompts2)
        np.testing.assert_array_equal(sigma, sigma2)

    def test_position_prompt_changes_density(self, tiny_arch: FieldArch) -> None:
        """At the position site the prompt reaches the density head."""
        arch = tiny_arch.with_prompt(PromptSite.POSITION)
        params = init_params(arch, seed=5)
        x, d, prompts = _random_inputs(16, 8)
        _, sigma = query_points(params, arch, x, d, prompts)
        _, sigma2 = query_points(params, arch, x, d, 1.0 - prompts)
        assert not np.array_equal(sigma, sigma2)

    def test_outputs_in_range(self, tiny_arch: FieldArch) -> None:
        """Color stays in [0, 1] and density non-negative for extreme weights."""
        arch = tiny_arch.with_prompt(PromptSite.DIRECTION)
        params = init_params(arch, seed=1)
        for name in params:
            params[name] = params[name] * 5.0
        x, d, prompts = _random_inputs(64, 9)
        colors, sigmas = query_points(params, arch, x * 10.0, d, prompts)
        assert np.all((colors >= 0.0) & (colors <= 1.0))
        assert np.all(sigmas >= 0.0)

    def test_prompt_presence_must_match_site(self, tiny_arch: FieldArch) -> None:
        """A prompted field needs a prompt; an unprompted one refuses it."""
        plain = init_params(tiny_arch, seed=0)
        with pytest.raises(UsageError):
            query(plain, tiny_arch, [0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.5, 0.5, 0.5])
        arch = tiny_arch.with_prompt(PromptSite.DIRECTION)
        with pytest.raises(UsageError):
            query(init_params(arch, seed=0), arch, [0.0, 0.0, 0.0], [0.0, 0.0, 1.0])

    def test_prompt_must_be_rgb_in_range(self, tiny_arch: FieldArch) -> None:
        """Prompt triples outside [0, 1] are refused."""
        arch = tiny_arch.with_prompt(PromptSite.DIRECTION)
        with pytest.raises(UsageError):
            query(init_params(arch, seed=0), arch, [0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [1.5, 0.0, 0.0])

    def test_unknown_network(self, tiny_arch: FieldArch) -> None:
        """A single-network field has no fine network."""
        arch = tiny_arch.model_copy(update={"hierarchical": False})
        with pytest.raises(UsageError):
            query_points(init_params(arch, seed=0), arch, np.zeros((1, 3)), [[0.0, 0.0, 1.0]], network="fine")


class TestParamCount:
    """Closed-form parameter accounting."""

    def test_full_preset(self) -> None:
        """The 8x256 pair has 1,191,688 parameters and the direction prompt adds 768."""
        arch = FieldArch.full()
        assert param_count(arch) == 1_191_688
        assert param_count(arch.with_prompt(PromptSite.DIRECTION)) - param_count(arch) == 768

    def test_single_network_delta(self) -> None:
        """A 64-wide direction branch on one network adds 192."""
        arch = FieldArch(dir_branch_width=64, hierarchical=False)
        assert param_count(arch.with_prompt(PromptSite.DIRECTION)) - param_count(arch) == 192

    def test_coarse_only_prompt(self) -> None:
        """Prompting only the coarse network halves the overhead of the pair."""
        arch = FieldArch.full().model_copy(update={"prompt_fine": False})
        assert param_count(arch.with_prompt(PromptSite.DIRECTION)) - param_count(arch) == 384

    @pytest.mark.parametrize("preset", sorted(ARCH_PRESETS))
    @pytest.mark.parametrize("site", list(PromptSite))
    @pytest.mark.parametrize("prompt_fine", [True, False])
    def test_matches_enumeration(self, preset: str, site: PromptSite, prompt_fine: bool) -> None:
        """The formula equals the number of scalars actually initialized."""
        arch = ARCH_PRESETS[preset]().model_copy(update={"prompt_site": site, "prompt_fine": prompt_fine})
        shapes = param_shapes(arch)
        assert param_count(arch) == sum(int(np.prod(s)) for s in shapes.values())

    @pytest.mark.parametrize("width", [8, 32, 128])
    def test_overhead_identity(self, width: int) -> None:
        """Direction overhead is 3 x dir_branch_width x networks."""
        for hierarchical in (True, False):
            arch = FieldArch(dir_branch_width=width, hierarchical=hierarchical)
            delta = param_count(arch.with_prompt(PromptSite.DIRECTION)) - param_count(arch)
            assert delta == 3 * width * len(arch.networks)


class TestInitParams:
    """Fresh and warm-started initialization."""

    def test_deterministic(self, tiny_arch: FieldArch) -> None:
        """The same seed gives bit-identical tensors."""
        a = init_params(tiny_arch, seed=11)
        b = init_params(tiny_arch, seed=11)
        assert list(a) == list(b)
        for name in a:
            assert a[name].tobytes() == b[name].tobytes()

    def test_seeds_differ(self, tiny_arch: FieldArch) -> None:
        """Different seeds give different weights."""
        a = init_params(tiny_arch, seed=1)
        b = init_params(tiny_arch, seed=2)
        assert not np.array_equal(a["coarse.trunk.0.weight"], b["coarse.trunk.0.weight"])

    def test_fan_in_scaled_spread(self) -> None:
        """Each weight's standard deviation is within 20% of bound / sqrt(3)."""
        arch = FieldArch.desk().with_prompt(PromptSite.DIRECTION)
        samples: dict[str, list[np.ndarray]] = {}
        for seed in range(10):
            params = init_params(arch, seed=seed)
            for name, tensor in params.items():
                if name.endswith(".weight"):
                    samples.setdefault(name, []).append(tensor.ravel())
        for name, parts in samples.items():
            values = np.concatenate(parts)
            fan_in = params[name].shape[1]
            if name.endswith("dir.weight"):
                fan_in += 3
            target = 1.0 / math.sqrt(fan_in) / math.sqrt(3.0)
            assert abs(values.std() - target) <= 0.2 * target, name

    def test_biases_start_at_zero(self, tiny_arch: FieldArch) -> None:
        """Fresh biases are zero."""
        params = init_params(tiny_arch, seed=0)
        for name, tensor in params.items():
            if name.endswith(".bias"):
                assert not tensor.any()

    def test_warm_start_copies_and_zeroes_prompt(self, tiny_arch: FieldArch) -> None:
        """Matching tensors are copied; new prompt columns are zero."""
        base = init_params(tiny_arch, seed=3)
        arch = tiny_arch.with_prompt(PromptSite.DIRECTION)
        warm = init_params(arch, seed=4, warm_from=base)
        for name in base:
            np.testing.assert_array_equal(warm[name], base[name])
        assert not warm["coarse.dir.prompt_weight"].any()
        assert not warm["fine.dir.prompt_weight"].any()

    def test_warm_start_keeps_trained_prompt(self, tiny_arch: FieldArch) -> None:
        """A prompted source keeps its prompt columns."""
        arch = tiny_arch.with_prompt(PromptSite.DIRECTION)
        source = init_params(arch, seed=3)
        warm = init_params(arch, seed=4, warm_from=source)
        np.testing.assert_array_equal(warm["coarse.dir.prompt_weight"], source["coarse.dir.prompt_weight"])

    def test_incompatible_shapes(self, tiny_arch: FieldArch) -> None:
        """A source of a different width is rejected with the offending tensor named."""
        wider = tiny_arch.model_copy(update={"trunk_width": 10})
        with pytest.raises(IncompatibleParamsError) as excinfo:
            init_params(tiny_arch, seed=0, warm_from=init_params(wider, seed=0))
        assert excinfo.value.name.startswith("coarse.")

    def test_missing_tensor(self, tiny_arch: FieldArch) -> None:
        """A hierarchical target cannot warm-start from a single network."""
        single = tiny_arch.model_copy(update={"hierarchical": False})
        with pytest.raises(IncompatibleParamsError, match="fine"):
            init_params(tiny_arch, seed=0, warm_from=init_params(single, seed=0))

    def test_extra_tensor(self, tiny_arch: FieldArch) -> None:
        """Prompt columns cannot be dropped silently."""
        prompted = init_params(tiny_arch.with_prompt(PromptSite.DIRECTION), seed=0)
        with pytest.raises(IncompatibleParamsError, match="prompt_weight"):
            init_params(tiny_arch, seed=0, warm_from=prompted)
