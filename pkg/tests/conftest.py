"""Shared fixtures: a tiny generated scene and small network settings."""

from pathlib import Path

import pytest

from cascade_nerf.models.field import EncodingConfig, FieldArch
from cascade_nerf.models.render import RenderConfig
from cascade_nerf.models.scene import SceneDataset, SceneSpec
from cascade_nerf.models.training import TrainConfig
from cascade_nerf.scene.dataset import gen_scene, load_dataset

TINY_SPEC = SceneSpec(
    scene="sphere",
    train_views=2,
    val_views=1,
    test_views=1,
    resolution=12,
    seed=1,
    quadrature_n=256,
)


@pytest.fixture(scope="session")
def scene_dir(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """A 12x12 sphere dataset with 2/1/1 views; treat as read-only."""
    out = tmp_path_factory.mktemp("scene") / "sphere"
    gen_scene(TINY_SPEC, out)
    return out


@pytest.fixture
def dataset(scene_dir: Path) -> SceneDataset:
    return load_dataset(scene_dir)


@pytest.fixture
def tiny_arch() -> FieldArch:
    return FieldArch(
        trunk_depth=2,
        trunk_width=8,
        skip_at=1,
        dir_branch_width=6,
        pos_encoding=EncodingConfig(n_freqs=2),
        dir_encoding=EncodingConfig(n_freqs=1),
    )


@pytest.fixture
def tiny_render() -> RenderConfig:
    return RenderConfig(n_coarse=8, n_fine=8, chunk_rays=32)


@pytest.fixture
def tiny_train(tiny_render: RenderConfig) -> TrainConfig:
    return TrainConfig(
        iterations=3,
        batch_rays=40,
        learning_rate=5e-3,
        validate_every=0,
        log_every=1,
        render=tiny_render,
    )
