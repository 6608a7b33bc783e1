"""Shipped reference artifacts: normalization stats and model weights.

The stats are corpus-level, produced by running the acoustic extractor
over the scripted corpus below (every canned reply synthesized with the
default voice). The model weights are seeded random values standing in
for a trained network. Both are checked in; `generate_assets` recreates
them bit-for-bit.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from . import chatbot as cb
from . import features as feat
from . import gesture as ges

NORM_STATS_FILE = "norm_stats.txt"
MODEL_FILE = "reference_model.txt"
SKELETON_FILE = "skeleton.json"

ACOUSTIC_VARIANT = "minimal_params"
FEATURE_DIM = feat.ACOUSTIC_DIMS[ACOUSTIC_VARIANT] + feat.DEFAULT_EMBED_DIM


def _asset_path(name: str) -> Path:
    return Path(str(resources.files("gesturepipe").joinpath("assets", name)))


def reference_norm_stats() -> feat.NormStats:
    return feat.load_norm_stats(str(_asset_path(NORM_STATS_FILE)))


def reference_model() -> ges.GestureModel:
    return ges.load_model(str(_asset_path(MODEL_FILE)))


def reference_skeleton() -> ges.Skeleton:
    return ges.load_skeleton(str(_asset_path(SKELETON_FILE)))


def scripted_corpus() -> list[str]:
    """Every canned reply plus the fallback: the stats fitting corpus."""
    table = cb.DEFAULT_INTENTS
    return [intent.reply for intent in table.intents] + [table.fallback_reply]


def generate_assets(out_dir: str | None = None) -> dict[str, str]:
    """(Re)build the shipped stats, model and skeleton files."""
    out = Path(out_dir) if out_dir else _asset_path("").parent / "assets"
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    for reply in scripted_corpus():
        speech = cb.synthesize_speech(reply)
        rows.append(feat.extract_acoustic(speech.audio, ACOUSTIC_VARIANT))
    stats = feat.fit_norm_stats(np.vstack(rows))
    stats_path = out / NORM_STATS_FILE
    feat.save_norm_stats(stats, str(stats_path))

    model = ges.make_reference_model(FEATURE_DIM)
    model_path = out / MODEL_FILE
    ges.save_model(model, str(model_path))

    skeleton_path = out / SKELETON_FILE
    ges.save_skeleton(ges.Skeleton(), str(skeleton_path))

    return {
        "norm_stats": str(stats_path),
        "model": str(model_path),
        "skeleton": str(skeleton_path),
    }
