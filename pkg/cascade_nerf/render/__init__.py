"""Volume rendering: sampling, compositing and ray tracing through the field."""

from .composite import composite, composite_graph, expected_depth, segment_deltas
from .renderer import RayTrace, render_ray, render_rays, render_view, trace_view
from .sampling import importance_samples, sample_importance, sample_stratified, stratified_samples

__all__ = [
    "RayTrace",
    "composite",
    "composite_graph",
    "expected_depth",
    "importance_samples",
    "render_ray",
    "render_rays",
    "render_view",
    "sample_importance",
    "sample_stratified",
    "segment_deltas",
    "stratified_samples",
    "trace_view",
]
