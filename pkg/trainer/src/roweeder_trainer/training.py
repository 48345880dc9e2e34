"""Training loop: AdamW, linear warmup + cosine decay, focal loss.

One epoch runs as many iterations as there are training tiles (batches
cycle through a seeded reshuffling stream), checkpoints are written
atomically, and every iteration appends (iter, lr, loss) to a JSON-lines
log.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import TileRef, TileStore
from .decoders import DecoderSpec, WeedSegModel
from .encoders import build_encoder
from .errors import InvalidParam, MissingData
from .losses import focal_loss, inverse_frequency_weights
from .schedule import learning_rate


@dataclass
class TrainConfig:
    lr: float = 1e-5
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.01
    warmup_iters: int = 1000
    epochs: int = 20
    gamma: float = 2.0
    class_weights: tuple[float, float, float] | None = None  # None: inverse frequency
    batch_size: int = 8
    seed: int = 0
    encoder: str = "toy"
    channels: tuple[str, ...] = ("R", "G", "B")

    def __post_init__(self):
        if self.lr <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise InvalidParam("lr, epochs, and batch_size must be positive")
        if self.gamma < 0:
            raise InvalidParam("gamma must be >= 0")


@dataclass
class TrainResult:
    checkpoint_path: Path
    log_path: Path
    epoch_mean_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)


class _BatchStream:
    """Endless stream of seeded reshuffled tile batches."""

    def __init__(self, refs: list[TileRef], batch_size: int, seed: int):
        self.refs = list(refs)
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)
        self._queue: list[int] = []

    def next_batch(self) -> list[TileRef]:
        while len(self._queue) < self.batch_size:
            self._queue.extend(self.rng.permutation(len(self.refs)).tolist())
        take, self._queue = self._queue[: self.batch_size], self._queue[self.batch_size:]
        return [self.refs[i] for i in take]


def _atomic_save(payload: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    try:
        torch.save(payload, tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def train(
    store: TileStore,
    train_refs: list[TileRef],
    val_refs: list[TileRef],
    spec: DecoderSpec,
    config: TrainConfig,
    out_dir: str | Path,
) -> TrainResult:
    """Train a model on pseudo-labeled tiles and checkpoint it.

    Returns per-epoch mean training losses (the end-to-end convergence
    check compares first vs last epoch) and per-epoch validation losses.
    """
    if not train_refs:
        raise MissingData("no training tiles")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(config.seed)

    encoder = build_encoder(config.encoder, in_channels=len(config.channels),
                            n_blocks=spec.n_blocks)
    model = WeedSegModel(encoder, spec)
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=config.lr, betas=config.betas,
        weight_decay=config.weight_decay,
    )

    if config.class_weights is not None:
        weights = torch.tensor(config.class_weights, dtype=torch.float32)
    else:
        weights = inverse_frequency_weights(store.label_counts(train_refs)).to(torch.float32)

    iters_per_epoch = len(train_refs)
    total_iters = iters_per_epoch * config.epochs
    stream = _BatchStream(train_refs, config.batch_size, config.seed)
    log_path = out_dir / "training_log.jsonl"
    result = TrainResult(checkpoint_path=out_dir / "checkpoint.pt", log_path=log_path)

    iteration = 0
    with open(log_path, "w") as log:
        for epoch in range(config.epochs):
            model.train()
            epoch_losses = []
            for _ in range(iters_per_epoch):
                iteration += 1
                lr = learning_rate(iteration, config.lr, config.warmup_iters, total_iters)
                for group in optimizer.param_groups:
                    group["lr"] = lr
                images, targets = store.batch(stream.next_batch())
                probs = model(images)
                loss = focal_loss(probs, targets, weights, config.gamma)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                epoch_losses.append(float(loss.detach()))
                log.write(json.dumps({"iter": iteration, "lr": lr,
                                      "loss": epoch_losses[-1]}) + "\n")
            result.epoch_mean_losses.append(float(np.mean(epoch_losses)))

            if val_refs:
                model.eval()
                with torch.no_grad():
                    val_losses = []
                    for start in range(0, len(val_refs), config.batch_size):
                        images, targets = store.batch(val_refs[start:start + config.batch_size])
                        val_losses.append(float(focal_loss(model(images), targets,
                                                           weights, config.gamma)))
                result.val_losses.append(float(np.mean(val_losses)))
                log.write(json.dumps({"epoch": epoch + 1,
                                      "val_loss": result.val_losses[-1]}) + "\n")

    _atomic_save(
        {
            "model_state": model.state_dict(),
            "decoder_spec": asdict(spec),
            "train_config": asdict(config),
            "class_weights": weights.tolist(),
        },
        result.checkpoint_path,
    )
    return result


def load_model(checkpoint_path: str | Path) -> tuple[WeedSegModel, dict]:
    payload = torch.load(checkpoint_path, map_location="cpu", weights_only=False)
    spec = DecoderSpec(**payload["decoder_spec"])
    cfg = payload["train_config"]
    encoder = build_encoder(cfg["encoder"], in_channels=len(cfg["channels"]),
                            n_blocks=spec.n_blocks)
    model = WeedSegModel(encoder, spec)
    model.load_state_dict(payload["model_state"])
    model.eval()
    return model, cfg
