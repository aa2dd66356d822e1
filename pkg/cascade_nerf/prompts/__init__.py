"""Prompt bank construction, lookup, distance and persistence."""

from .bank import (
    bank_distance,
    build_bank,
    check_coverage,
    load_bank,
    lookup,
    prompt_image,
    save_bank,
    synth_bank,
)

__all__ = [
    "bank_distance",
    "build_bank",
    "check_coverage",
    "load_bank",
    "lookup",
    "prompt_image",
    "save_bank",
    "synth_bank",
]
