"""Prediction export in the labeling pipeline's palette-PNG format."""

from __future__ import annotations

from pathlib import Path

import torch

from .data import TileRef, TileStore, write_prediction_png
from .training import load_model


def predict_export(
    checkpoint_path: str | Path,
    store: TileStore,
    refs: list[TileRef],
    out_root: str | Path,
    batch_size: int = 8,
) -> list[Path]:
    """Run the checkpointed model and write one argmax mask per tile as
    ``<out>/<map>/<idx>_pred.png``, scoreable by the pipeline evaluator."""
    model, _ = load_model(checkpoint_path)
    out_root = Path(out_root)
    written = []
    with torch.no_grad():
        for start in range(0, len(refs), batch_size):
            chunk = refs[start:start + batch_size]
            images = torch.stack([store.image(r) for r in chunk])
            labels = model(images).argmax(dim=1)
            for ref, mask in zip(chunk, labels):
                path = out_root / ref.map_id / f"{ref.index}_pred.png"
                write_prediction_png(mask.numpy(), path)
                written.append(path)
    return written
