"""Hierarchical encoders producing feature maps at strides 4, 8, 16, 32.

Two interchangeable backbones: a small strided-convolution encoder for
CPU-scale tests and training runs, and the SegFormer-B0 transformer
encoder (3.32M parameters) for parameter-count checks and real runs. Both
return one feature map per stage, shallowest first, with the same default
channel widths so the decoders plug into either.
"""

from __future__ import annotations

import torch
from torch import nn

from .errors import InvalidParam, ShapeError

DEFAULT_DIMS = (32, 64, 160, 256)


def _check_input(x: torch.Tensor) -> None:
    if x.ndim != 4:
        raise ShapeError(f"expected a (B, C, H, W) batch, got shape {tuple(x.shape)}")
    if x.shape[-1] % 32 or x.shape[-2] % 32:
        raise ShapeError(f"H and W must be divisible by 32, got {tuple(x.shape[-2:])}")


class ToyEncoder(nn.Module):
    """Four strided conv stages; stage i halves resolution (first quarters).

    Parameter count per stage: the strided conv k*k*C_in*C_out + C_out plus
    a 3x3 refine conv 9*C_out^2 + C_out, which tests check analytically.
    """

    def __init__(self, in_channels: int = 3, dims: tuple[int, ...] = DEFAULT_DIMS,
                 n_blocks: int = 4):
        super().__init__()
        if not 2 <= n_blocks <= len(dims):
            raise InvalidParam(f"n_blocks must be in [2, {len(dims)}]")
        self.dims = tuple(dims[:n_blocks])
        self.n_blocks = n_blocks
        stages = []
        prev = in_channels
        for i, dim in enumerate(self.dims):
            kernel, stride, pad = (7, 4, 3) if i == 0 else (3, 2, 1)
            stages.append(
                nn.Sequential(
                    nn.Conv2d(prev, dim, kernel, stride=stride, padding=pad),
                    nn.GELU(),
                    nn.Conv2d(dim, dim, 3, padding=1),
                    nn.GELU(),
                )
            )
            prev = dim
        self.stages = nn.ModuleList(stages)

    @staticmethod
    def expected_param_count(in_channels: int = 3, dims: tuple[int, ...] = DEFAULT_DIMS,
                             n_blocks: int = 4) -> int:
        total = 0
        prev = in_channels
        for i, dim in enumerate(dims[:n_blocks]):
            kernel = 7 if i == 0 else 3
            total += kernel * kernel * prev * dim + dim  # strided conv
            total += 9 * dim * dim + dim  # refine conv
            prev = dim
        return total

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        _check_input(x)
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats


class SegformerB0Encoder(nn.Module):
    """SegFormer-B0 hierarchical transformer encoder (random init).

    Truncating to n_blocks keeps the first stages, mirroring the
    block-count ablation where encoder and decoder shrink together.
    """

    DEPTHS = (2, 2, 2, 2)
    HEADS = (1, 2, 5, 8)
    SR_RATIOS = (8, 4, 2, 1)
    PATCH_SIZES = (7, 3, 3, 3)
    STRIDES = (4, 2, 2, 2)

    def __init__(self, in_channels: int = 3, n_blocks: int = 4):
        super().__init__()
        if not 2 <= n_blocks <= 4:
            raise InvalidParam("n_blocks must be in [2, 4]")
        from transformers import SegformerConfig, SegformerModel

        config = SegformerConfig(
            num_channels=in_channels,
            num_encoder_blocks=n_blocks,
            hidden_sizes=list(DEFAULT_DIMS[:n_blocks]),
            depths=list(self.DEPTHS[:n_blocks]),
            num_attention_heads=list(self.HEADS[:n_blocks]),
            sr_ratios=list(self.SR_RATIOS[:n_blocks]),
            patch_sizes=list(self.PATCH_SIZES[:n_blocks]),
            strides=list(self.STRIDES[:n_blocks]),
        )
        self.backbone = SegformerModel(config)
        self.dims = tuple(DEFAULT_DIMS[:n_blocks])
        self.n_blocks = n_blocks

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        _check_input(x)
        out = self.backbone(x, output_hidden_states=True)
        return list(out.hidden_states)


def build_encoder(name: str, in_channels: int = 3, n_blocks: int = 4) -> nn.Module:
    if name == "toy":
        return ToyEncoder(in_channels, n_blocks=n_blocks)
    if name == "b0":
        return SegformerB0Encoder(in_channels, n_blocks=n_blocks)
    raise InvalidParam(f"unknown encoder {name!r}")
