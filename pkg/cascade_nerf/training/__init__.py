"""Stage training, evaluation and the cascade loop."""

from .cascade import resume_cascade, run_cascade
from .evaluation import complexity_report, evaluate_split, score_view, write_view_metrics
from .optimizer import OptimizerState, optimizer_step
from .trainer import RayBatcher, RayPool, first_batch_loss, photometric_loss, train_stage

__all__ = [
    "OptimizerState",
    "RayBatcher",
    "RayPool",
    "complexity_report",
    "evaluate_split",
    "first_batch_loss",
    "optimizer_step",
    "photometric_loss",
    "resume_cascade",
    "run_cascade",
    "score_view",
    "train_stage",
    "write_view_metrics",
]
