"""Segmentation decoders fusing the encoder's multi-scale features.

Three families:

* pyramid — walks from the deepest map to the shallowest; at each step the
  running map is upsampled one octave, projected point-wise to the next
  stage's width, fused with that stage's features (addition keeps the
  width, concatenation doubles it), then a 3x3 spatial convolution and
  GELU produce the next running map.
* flat — every feature map is independently upsampled to the shallowest
  scale and projected to a common width; fusion is either a sum of the
  per-map projections or one projection of their concatenation; then one
  3x3 convolution and GELU.
* segformer-mlp — the all-MLP baseline: per-map linear projection to a
  common width, upsample, concatenate, fuse point-wise.

A 1x1 head reduces to the class count, upsamples to the input resolution,
and applies softmax.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .errors import InvalidParam, ShapeError

N_CLASSES = 3

FAMILIES = ("pyramid", "flat", "segformer-mlp")
FUSIONS = ("add", "concat")
UPSAMPLES = ("interpolation", "deconvolution")


@dataclass(frozen=True)
class DecoderSpec:
    """Decoder configuration; the all-MLP family ignores fusion/upsample."""

    family: str = "flat"
    fusion: str = "add"
    upsample: str = "interpolation"
    n_blocks: int = 4
    embed_dim: int = 160

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidParam(f"unknown decoder family {self.family!r}")
        if self.fusion not in FUSIONS:
            raise InvalidParam(f"unknown fusion {self.fusion!r}")
        if self.upsample not in UPSAMPLES:
            raise InvalidParam(f"unknown upsample {self.upsample!r}")
        if not 2 <= self.n_blocks <= 4:
            raise InvalidParam("n_blocks must be in [2, 4]")
        if self.embed_dim < 1:
            raise InvalidParam("embed_dim must be positive")


class _Upsampler(nn.Module):
    """One-octave-x-``factor_log2`` upsampling: bilinear interpolation or a
    chain of kernel-2 stride-2 transposed convolutions."""

    def __init__(self, channels: int, factor_log2: int, mode: str):
        super().__init__()
        self.factor = 2 ** factor_log2
        self.mode = mode
        if mode == "deconvolution":
            self.deconvs = nn.ModuleList(
                nn.ConvTranspose2d(channels, channels, 2, stride=2)
                for _ in range(factor_log2)
            )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.factor == 1:
            return x
        if self.mode == "interpolation":
            return F.interpolate(x, scale_factor=self.factor, mode="bilinear",
                                 align_corners=False)
        for deconv in self.deconvs:
            x = deconv(x)
        return x


class PyramidDecoder(nn.Module):
    def __init__(self, dims: tuple[int, ...], spec: DecoderSpec):
        super().__init__()
        if len(dims) < 2:
            raise InvalidParam("pyramid decoder needs at least 2 feature maps")
        self.dims = tuple(dims)
        self.fusion = spec.fusion
        ups, projs, spatials = [], [], []
        for deep, shallow in zip(dims[:0:-1], dims[-2::-1]):
            ups.append(_Upsampler(deep, 1, spec.upsample))
            projs.append(nn.Conv2d(deep, shallow, 1))
            fused = 2 * shallow if spec.fusion == "concat" else shallow
            spatials.append(nn.Conv2d(fused, shallow, 3, padding=1))
        self.ups = nn.ModuleList(ups)
        self.projs = nn.ModuleList(projs)
        self.spatials = nn.ModuleList(spatials)
        self.out_channels = dims[0]

    def forward(self, features: list[torch.Tensor]) -> torch.Tensor:
        if len(features) != len(self.dims):
            raise ShapeError(f"expected {len(self.dims)} feature maps")
        x = features[-1]
        for i, shallow in enumerate(reversed(features[:-1])):
            x = self.projs[i](self.ups[i](x))
            x = torch.cat([x, shallow], dim=1) if self.fusion == "concat" else x + shallow
            x = F.gelu(self.spatials[i](x))
        return x


class FlatDecoder(nn.Module):
    def __init__(self, dims: tuple[int, ...], spec: DecoderSpec):
        super().__init__()
        self.dims = tuple(dims)
        self.fusion = spec.fusion
        embed = spec.embed_dim
        self.ups = nn.ModuleList(
            _Upsampler(dim, i, spec.upsample) for i, dim in enumerate(dims)
        )
        if spec.fusion == "add":
            self.projs = nn.ModuleList(nn.Conv2d(dim, embed, 1) for dim in dims)
        else:
            self.proj = nn.Conv2d(sum(dims), embed, 1)
        self.spatial = nn.Conv2d(embed, embed, 3, padding=1)
        self.out_channels = embed

    def forward(self, features: list[torch.Tensor]) -> torch.Tensor:
        if len(features) != len(self.dims):
            raise ShapeError(f"expected {len(self.dims)} feature maps")
        upsampled = [up(f) for up, f in zip(self.ups, features)]
        if self.fusion == "add":
            x = self.projs[0](upsampled[0])
            for proj, feat in zip(list(self.projs)[1:], upsampled[1:]):
                x = x + proj(feat)
        else:
            x = self.proj(torch.cat(upsampled, dim=1))
        return F.gelu(self.spatial(x))


class SegformerMLPDecoder(nn.Module):
    """All-MLP fusion: per-map point-wise projection, upsample, concat,
    point-wise fuse with batch norm and GELU."""

    def __init__(self, dims: tuple[int, ...], spec: DecoderSpec):
        super().__init__()
        self.dims = tuple(dims)
        embed = spec.embed_dim
        self.projs = nn.ModuleList(nn.Conv2d(dim, embed, 1) for dim in dims)
        self.fuse = nn.Conv2d(embed * len(dims), embed, 1)
        self.norm = nn.BatchNorm2d(embed)
        self.out_channels = embed

    def forward(self, features: list[torch.Tensor]) -> torch.Tensor:
        if len(features) != len(self.dims):
            raise ShapeError(f"expected {len(self.dims)} feature maps")
        target = features[0].shape[-2:]
        parts = []
        for proj, feat in zip(self.projs, features):
            x = proj(feat)
            if x.shape[-2:] != target:
                x = F.interpolate(x, size=target, mode="bilinear", align_corners=False)
            parts.append(x)
        return F.gelu(self.norm(self.fuse(torch.cat(parts, dim=1))))


class SegmentationHead(nn.Module):
    """1x1 projection to the class count, upsample to the input size,
    per-pixel softmax."""

    def __init__(self, in_channels: int, n_classes: int = N_CLASSES):
        super().__init__()
        self.proj = nn.Conv2d(in_channels, n_classes, 1)

    def forward(self, fused: torch.Tensor, out_size: tuple[int, int]) -> torch.Tensor:
        logits = self.proj(fused)
        if logits.shape[-2:] != out_size:
            logits = F.interpolate(logits, size=out_size, mode="bilinear",
                                   align_corners=False)
        return torch.softmax(logits, dim=1)


def build_decoder(dims: tuple[int, ...], spec: DecoderSpec) -> nn.Module:
    if spec.family == "pyramid":
        return PyramidDecoder(dims, spec)
    if spec.family == "flat":
        return FlatDecoder(dims, spec)
    return SegformerMLPDecoder(dims, spec)


class WeedSegModel(nn.Module):
    """Encoder + decoder + head; forward yields (B, 3, H, W) probabilities."""

    def __init__(self, encoder: nn.Module, spec: DecoderSpec):
        super().__init__()
        if encoder.n_blocks != spec.n_blocks:
            raise InvalidParam("encoder and decoder block counts must match")
        self.encoder = encoder
        self.decoder = build_decoder(encoder.dims, spec)
        self.head = SegmentationHead(self.decoder.out_channels)
        self.spec = spec

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        features = self.encoder(x)
        fused = self.decoder(features)
        return self.head(fused, x.shape[-2:])

    def param_count(self) -> int:
        return sum(p.numel() for p in self.parameters())
