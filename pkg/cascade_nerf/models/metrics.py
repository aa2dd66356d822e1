"""Image-quality report data models."""

from statistics import fmean

from pydantic import BaseModel, Field


class ViewMetrics(BaseModel):
    """Quality numbers for one rendered view."""

    view_id: str
    split: str
    psnr: float = Field(..., description="dB")
    ssim: float
    depth_mse: float | None = Field(default=None, description="scene units squared")


class MetricReport(BaseModel):
    """Per-view metrics and their arithmetic means."""

    stage: int | None = None
    split: str
    views: list[ViewMetrics]
    psnr: float
    ssim: float
    depth_mse: float | None = None

    @classmethod
    def from_views(cls, views: list[ViewMetrics], split: str, stage: int | None = None) -> "MetricReport":
        """Build a report whose means are taken over the given views."""
        depths = [v.depth_mse for v in views if v.depth_mse is not None]
        return cls(
            stage=stage,
            split=split,
            views=views,
            psnr=fmean(v.psnr for v in views),
            ssim=fmean(v.ssim for v in views),
            depth_mse=fmean(depths) if depths else None,
        )
