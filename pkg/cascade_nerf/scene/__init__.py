"""Cameras, analytic scenes, the oracle renderer and dataset directories."""

from .analytic import SCENES, AnalyticField, SoftBox, SoftSphere, get_scene
from .camera import (
    check_pose,
    hemisphere_poses,
    look_at,
    pixel_grid,
    project,
    ray_bundle,
    ray_for_pixel,
    rays_for_view,
)
from .dataset import dataset_hash, gen_scene, load_dataset, save_dataset, subsample_dataset
from .oracle import oracle_rays, oracle_render

__all__ = [
    "SCENES",
    "AnalyticField",
    "SoftBox",
    "SoftSphere",
    "check_pose",
    "dataset_hash",
    "gen_scene",
    "get_scene",
    "hemisphere_poses",
    "load_dataset",
    "look_at",
    "oracle_rays",
    "oracle_render",
    "pixel_grid",
    "project",
    "ray_bundle",
    "ray_for_pixel",
    "rays_for_view",
    "save_dataset",
    "subsample_dataset",
]
