"""Class-weighted focal loss over per-pixel class probabilities.

For one pixel with one-hot target y the loss sums, over the N+1 classes,
w_n * (1 - e^{-l_n})^gamma * l_n with l_n = -y_n * log(p_n), divided by
N+1. Only the target class contributes (l_n = 0 elsewhere), and since
e^{-l_t} = p_t the modulation factor is the familiar (1 - p_target)^gamma.
At gamma = 0 the loss reduces to weighted cross-entropy averaged over the
class count. Pixels and batch entries are averaged.
"""

from __future__ import annotations

import torch

from .errors import InvalidParam

_EPS = 1e-12


def focal_loss(
    probs: torch.Tensor,
    target: torch.Tensor,
    weights: torch.Tensor | None = None,
    gamma: float = 2.0,
) -> torch.Tensor:
    """Average focal loss.

    Args:
        probs: (B, C, H, W) per-pixel class probabilities (post-softmax).
        target: (B, H, W) integer class labels.
        weights: per-class weights, length C (default: all ones).
        gamma: focusing exponent, >= 0.

    Returns:
        Scalar loss tensor.
    """
    if gamma < 0:
        raise InvalidParam("gamma must be >= 0")
    if probs.ndim != 4 or target.ndim != 3:
        raise InvalidParam("probs must be (B, C, H, W) and target (B, H, W)")
    n_classes = probs.shape[1]
    if weights is None:
        weights = torch.ones(n_classes, dtype=probs.dtype, device=probs.device)
    weights = torch.as_tensor(weights, dtype=probs.dtype, device=probs.device)
    if weights.numel() != n_classes or bool((weights <= 0).any()):
        raise InvalidParam("weights must be positive, one per class")

    p_target = probs.gather(1, target.unsqueeze(1)).squeeze(1).clamp(_EPS, 1.0 - 1e-7)
    ce = -torch.log(p_target)
    modulation = (1.0 - torch.exp(-ce)) ** gamma if gamma > 0 else torch.ones_like(ce)
    w = weights[target]
    per_pixel = w * modulation * ce / n_classes
    return per_pixel.mean()


def inverse_frequency_weights(label_counts: torch.Tensor) -> torch.Tensor:
    """Per-class weights proportional to inverse pixel frequency,
    normalized to mean 1; classes absent from the data get the max weight."""
    counts = label_counts.to(torch.float64)
    total = counts.sum()
    if total == 0:
        return torch.ones_like(counts)
    freq = counts / total
    present = freq > 0
    inv = torch.zeros_like(freq)
    inv[present] = 1.0 / freq[present]
    if bool((~present).any()):
        inv[~present] = inv[present].max() if bool(present.any()) else 1.0
    return inv / inv.mean()
