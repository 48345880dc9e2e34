"""Noise-resilient segmentation model trained on crop-row pseudo-labels.

A hierarchical encoder (SegFormer-B0 or a small conv stand-in) feeds a
pyramid, flat, or all-MLP decoder; training optimizes a class-weighted
focal loss with AdamW under linear warmup and cosine decay, using the
labeling pipeline's pseudo-ground-truth PNGs as targets and exporting
predictions in the pipeline's own mask format.
"""

from .data import TileRef, TileStore, discover_map_tiles, load_folds
from .decoders import (
    DecoderSpec,
    FlatDecoder,
    PyramidDecoder,
    SegformerMLPDecoder,
    SegmentationHead,
    WeedSegModel,
    build_decoder,
)
from .encoders import SegformerB0Encoder, ToyEncoder, build_encoder
from .errors import InvalidParam, MissingData, ShapeError, TrainerError
from .losses import focal_loss, inverse_frequency_weights
from .predict import predict_export
from .schedule import learning_rate
from .training import TrainConfig, TrainResult, load_model, train

__version__ = "0.1.0"
