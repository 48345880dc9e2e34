"""Unsupervised weed mapping from crop-row geometry.

The pipeline thresholds a vegetation index into a plant mask, detects
crop rows with a Hough transform (after rotating the tile so rows run
horizontally), drops detections whose angle distribution is uniform,
and labels every plant instance crop or weed by single-pixel overlap
with the rasterized rows. Evaluation reports per-class/macro F1 plus an
intra-row/inter-row decomposition.
"""

from .config import PipelineConfig, load_config
from .dataset import (
    FieldMap,
    FoldSplit,
    SyntheticField,
    SyntheticFieldSpec,
    Tile,
    build_folds,
    generate_synthetic_field,
    tile_map,
)
from .errors import (
    ConfigError,
    DimensionMismatch,
    EmptyInput,
    EmptyMask,
    InvalidParam,
    OutOfBounds,
    RoweederError,
)
from .metrics import (
    ConfusionMatrix,
    EvalReport,
    F1Scores,
    confusion,
    evaluate_masks,
    f1_scores,
    row_partitioned_f1,
)
from .plants import (
    InstanceSource,
    PlantInstance,
    compute_excess_green,
    compute_ndvi,
    connected_components,
    default_cluster_count,
    instances_from_superpixels,
    slic_superpixels,
    threshold_vegetation,
)
from .pseudolabel import (
    PseudoLabelResult,
    TilePipelineOutcome,
    build_pseudo_gt,
    classify_instances,
    run_tile_pipeline,
)
from .raster import (
    BACKGROUND,
    CROP,
    WEED,
    BinaryMask,
    ClassMask,
    Raster,
    inverse_rotate_classmask,
    rotate_classmask,
    rotate_mask,
    rotate_raster,
)
from .rows import (
    HoughLine,
    RowDetection,
    estimate_alignment_angle,
    filter_lines,
    hough_accumulator,
    hough_lines,
    ks_uniformity_test,
    rasterize_rows,
)

__version__ = "0.1.0"
