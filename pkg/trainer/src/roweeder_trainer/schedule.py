"""Linear warmup followed by per-iteration cosine decay to zero."""

from __future__ import annotations

import math

from .errors import InvalidParam


def learning_rate(iteration: int, base_lr: float, warmup_iters: int, total_iters: int) -> float:
    """Learning rate at a 1-based iteration index.

    Ramps linearly from 0 to ``base_lr`` across the warmup, then follows a
    cosine from ``base_lr`` down to 0 at the final iteration.
    """
    if iteration < 1 or iteration > total_iters:
        raise InvalidParam(f"iteration {iteration} outside [1, {total_iters}]")
    if warmup_iters >= total_iters:
        return base_lr * iteration / max(1, warmup_iters)
    if iteration <= warmup_iters:
        return base_lr * iteration / max(1, warmup_iters)
    progress = (iteration - warmup_iters) / (total_iters - warmup_iters)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))
