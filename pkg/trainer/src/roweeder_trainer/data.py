"""File-level interface to the labeling pipeline's outputs.

The trainer consumes the pipeline strictly through its on-disk formats:
channel tiles under ``<root>/<map>/<CHANNEL>/<idx>.png``, pseudo-label
palette PNGs under ``<pseudo_root>/<map>/<idx>_pseudo.png``, fold splits
from its ``folds`` command, and it exports predictions in the same
palette-PNG convention (black background, green crop, red weed) so the
pipeline's ``evaluate`` command scores them unchanged.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .errors import MissingData

CLASS_PALETTE = [0, 0, 0, 0, 255, 0, 255, 0, 0]
DEFAULT_CHANNELS = ("R", "G", "B")
N_CLASSES = 3


def read_channel(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode == "I;16":
            return np.asarray(img, dtype=np.float32) / 65535.0
        if img.mode == "I":
            arr = np.asarray(img, dtype=np.float32)
            return arr / 65535.0 if arr.max() > 255 else arr / 255.0
        return np.asarray(img.convert("L"), dtype=np.float32) / 255.0


def read_labels(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        if img.mode == "P":
            return np.asarray(img, dtype=np.int64)
        if img.mode in ("RGB", "RGBA"):
            rgb = np.asarray(img.convert("RGB"), dtype=np.int64)
            labels = np.zeros(rgb.shape[:2], dtype=np.int64)
            labels[(rgb[..., 1] > 127) & (rgb[..., 0] <= 127)] = 1
            labels[(rgb[..., 0] > 127) & (rgb[..., 1] <= 127)] = 2
            return labels
        return np.asarray(img.convert("L"), dtype=np.int64)


def write_prediction_png(labels: np.ndarray, path: Path) -> None:
    img = Image.fromarray(labels.astype(np.uint8), mode="P")
    img.putpalette(CLASS_PALETTE + [0, 0, 0] * 253)
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PNG")


@dataclass(frozen=True)
class TileRef:
    map_id: str
    index: int


def load_folds(path: str | Path) -> list[dict]:
    data = json.loads(Path(path).read_text())
    return data["folds"]


def discover_map_tiles(data_root: str | Path, map_id: str,
                       channels: tuple[str, ...] = DEFAULT_CHANNELS) -> list[TileRef]:
    ch_dir = Path(data_root) / map_id / channels[0]
    if not ch_dir.is_dir():
        raise MissingData(f"no channel dir {ch_dir}")
    refs = []
    for path in sorted(ch_dir.glob("*.png")):
        m = re.match(r"^(\d+)", path.stem)
        if m:
            refs.append(TileRef(map_id, int(m.group(1))))
    return sorted(refs, key=lambda r: r.index)


class TileStore:
    """Loads channel stacks and pseudo-label targets, cached in memory."""

    def __init__(self, data_root: str | Path, pseudo_root: str | Path | None = None,
                 channels: tuple[str, ...] = DEFAULT_CHANNELS):
        self.data_root = Path(data_root)
        self.pseudo_root = Path(pseudo_root) if pseudo_root is not None else None
        self.channels = tuple(channels)
        self._images: dict[TileRef, torch.Tensor] = {}
        self._targets: dict[TileRef, torch.Tensor] = {}

    def image(self, ref: TileRef) -> torch.Tensor:
        if ref not in self._images:
            planes = []
            for ch in self.channels:
                path = self.data_root / ref.map_id / ch / f"{ref.index}.png"
                if not path.exists():
                    raise MissingData(f"missing channel tile {path}")
                planes.append(read_channel(path))
            self._images[ref] = torch.from_numpy(np.stack(planes, axis=0))
        return self._images[ref]

    def target(self, ref: TileRef) -> torch.Tensor:
        if self.pseudo_root is None:
            raise MissingData("no pseudo-label root configured")
        if ref not in self._targets:
            path = self.pseudo_root / ref.map_id / f"{ref.index}_pseudo.png"
            if not path.exists():
                raise MissingData(f"missing pseudo tile {path}")
            self._targets[ref] = torch.from_numpy(read_labels(path))
        return self._targets[ref]

    def batch(self, refs: list[TileRef]) -> tuple[torch.Tensor, torch.Tensor]:
        images = torch.stack([self.image(r) for r in refs])
        targets = torch.stack([self.target(r) for r in refs])
        return images, targets

    def label_counts(self, refs: list[TileRef]) -> torch.Tensor:
        counts = torch.zeros(N_CLASSES, dtype=torch.int64)
        for ref in refs:
            counts += torch.bincount(self.target(ref).reshape(-1), minlength=N_CLASSES)
        return counts
