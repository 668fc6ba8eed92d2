"""Bundled family specifications used by the acceptance suite and as CLI examples."""
from __future__ import annotations

from importlib import resources
from pathlib import Path

from ..specio import load_spec

LOOP_CORPUS = (
    "loop_constant",
    "loop_avoided_crossing",
    "loop_exact_crossing",
    "loop_mickelsson_w1",
    "loop_mickelsson_wm1",
    "loop_mickelsson_w2",
    "loop_mickelsson_w1_m2",
    "loop_mickelsson_w1_m1",
    "loop_mickelsson_w2_0_1",
    "loop_paired_bands",
    "loop_mickelsson_mixed_wm2",
    "loop_hidden_crossing",
)


def corpus_dir() -> Path:
    return Path(str(resources.files(__package__)))


def spec_path(name: str) -> Path:
    return corpus_dir() / f"{name}.json"


def names() -> list[str]:
    return sorted(p.stem for p in corpus_dir().glob("*.json"))


def load(name: str) -> dict:
    return load_spec(spec_path(name))
