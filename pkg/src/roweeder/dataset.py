"""Map ingestion, tiling, cross-validation folds, and synthetic fields.

On-disk layout for a dataset root (mirrors the public multispectral tile
export without hard-coding it; a ``manifest.json`` at the root can
override channel dir names and store per-map alignment angles):

    <root>/<map_id>/<channel>/<tile>.png      channels e.g. R, G, B, NIR
    <root>/<map_id>/groundtruth/<tile>.png    optional class masks

A map dir holding exactly one file per channel is treated as a full
orthomosaic and cut into non-overlapping tiles; otherwise every file is
one pre-cut tile, matched across channels by filename.

The synthetic field generator renders crop rows plus off-row and on-row
weed blobs with an exact ground-truth mask, fully determined by its seed;
it is the verification oracle for the whole pipeline.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidParam
from .raster import (
    CROP,
    WEED,
    ClassMask,
    Raster,
    read_channel_raster,
    read_classmask_png,
    write_channel_png,
    write_classmask_png,
)

CHANNEL_ORDER = ("red", "green", "blue", "nir")
GROUNDTRUTH_DIR = "groundtruth"
MANIFEST_NAME = "manifest.json"
# Maps ingestible but excluded from default folds (different camera system).
EXCLUDED_FOLD_MAPS = frozenset({"005", "006", "007"})


@dataclass(frozen=True)
class FieldMap:
    """One orthomosaic: named channel rasters plus optional ground truth."""

    map_id: str
    channels: dict[str, Raster]
    gt: ClassMask | None = None
    alignment_angle: float | None = None

    def __post_init__(self):
        shapes = {r.shape for r in self.channels.values()}
        if self.gt is not None:
            shapes.add(self.gt.shape)
        if len(shapes) > 1:
            raise InvalidParam(f"map {self.map_id}: channel/gt shapes differ: {sorted(shapes)}")

    @property
    def shape(self) -> tuple[int, int]:
        return next(iter(self.channels.values())).shape


@dataclass(frozen=True)
class Tile:
    """One tile cut from a map, carrying its map-level alignment angle."""

    map_id: str
    index: int
    channels: dict[str, Raster]
    gt: ClassMask | None = None
    alignment_angle: float | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return next(iter(self.channels.values())).shape


@dataclass(frozen=True)
class FoldSplit:
    """One cross-validation fold: a held-out test map and a tile-level
    train/val split pooled over the remaining maps."""

    test_map: str
    train_maps: tuple[str, ...]
    val_fraction: float
    train_tiles: tuple[tuple[str, int], ...]
    val_tiles: tuple[tuple[str, int], ...]

    def __post_init__(self):
        if self.test_map in self.train_maps:
            raise InvalidParam("test map cannot appear among train maps")


def tile_map(fmap: FieldMap, tile_size: int) -> list[Tile]:
    """Cut a map into floor(H/s) x floor(W/s) tiles in raster order,
    dropping trailing partial strips."""
    if tile_size < 1:
        raise InvalidParam("tile_size must be >= 1")
    height, width = fmap.shape
    n_down = height // tile_size
    n_across = width // tile_size
    tiles = []
    for i in range(n_down):
        for j in range(n_across):
            r0, c0 = i * tile_size, j * tile_size
            sl = (slice(r0, r0 + tile_size), slice(c0, c0 + tile_size))
            channels = {name: Raster(r.values[sl]) for name, r in fmap.channels.items()}
            gt = ClassMask(fmap.gt.labels[sl]) if fmap.gt is not None else None
            tiles.append(
                Tile(
                    map_id=fmap.map_id,
                    index=i * n_across + j,
                    channels=channels,
                    gt=gt,
                    alignment_angle=fmap.alignment_angle,
                )
            )
    return tiles


def tile_count(fmap: FieldMap, tile_size: int) -> int:
    height, width = fmap.shape
    return (height // tile_size) * (width // tile_size)


def build_folds(
    maps: list[FieldMap], val_fraction: float, seed: int, tile_size: int = 512
) -> list[FoldSplit]:
    """One fold per map as test; remaining maps' tiles are pooled and split
    train/val at tile granularity by a seeded shuffle (val gets the floor)."""
    if len(maps) < 2:
        raise InvalidParam("need at least 2 maps to build folds")
    if not 0.0 < val_fraction < 1.0:
        raise InvalidParam("val_fraction must be in (0, 1)")
    ordered = sorted(maps, key=lambda m: m.map_id)
    folds = []
    for fold_idx, test in enumerate(ordered):
        train_maps = tuple(m.map_id for m in ordered if m.map_id != test.map_id)
        pooled = [
            (m.map_id, idx)
            for m in ordered
            if m.map_id != test.map_id
            for idx in range(tile_count(m, tile_size))
        ]
        rng = np.random.default_rng([seed, fold_idx])
        perm = rng.permutation(len(pooled))
        n_val = int(math.floor(val_fraction * len(pooled)))
        val = tuple(pooled[i] for i in perm[:n_val])
        train = tuple(pooled[i] for i in perm[n_val:])
        folds.append(
            FoldSplit(
                test_map=test.map_id,
                train_maps=train_maps,
                val_fraction=val_fraction,
                train_tiles=train,
                val_tiles=val,
            )
        )
    return folds


# ---------------------------------------------------------------------------
# Synthetic fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticFieldSpec:
    """Geometry of a rendered field; rng_seed fixes everything else.

    ``row_angle`` is the direction of the rows in degrees from the
    horizontal axis, so the line-normal angle is row_angle + 90 and the
    rotation aligning rows horizontally is -row_angle.
    """

    dims: tuple[int, int] = (256, 256)  # (height, width)
    n_rows: int = 6
    row_angle: float = 0.0
    row_spacing: float = 36.0
    crop_blob_radius: float = 3.0
    radius_jitter: float = 0.5
    n_inter_row_weeds: int = 0
    n_intra_row_weeds: int = 0
    rng_seed: int = 0
    inter_row_margin: float = 6.0  # min distance of weed pixels to centerlines
    # "disk" confines weed scatter to the inscribed circle, making the
    # blob geometry direction-neutral (a square support favors diagonal
    # Hough peaks, whose chords are longest).
    scatter_region: str = "rect"
    # Per-pixel dropout probability inside blobs. Ragged, holey blobs
    # break the straight pixel runs that perfect disks align with the
    # lattice axes and diagonals, which would bias Hough peak angles.
    blob_raggedness: float = 0.0
    # "blob" paints weeds as disks; "streak" paints them as elongated
    # segments at i.i.d. uniform orientations (grass tufts), which makes
    # the tile's detectable line angles uniform by construction.
    weed_shape: str = "blob"
    streak_length: float = 24.0
    streak_width: float = 3.0


@dataclass(frozen=True)
class SyntheticField:
    """Generated field plus the analytic truth used by verification tests."""

    field_map: FieldMap
    row_lines: tuple[tuple[float, float], ...]  # (rho, theta) per row, centered coords
    spec: SyntheticFieldSpec


# Reflectances per surface kind, ordered like CHANNEL_ORDER:
# (red, green, blue, nir). Vegetation clears the 0.1 NDVI threshold with
# wide margin, soil stays below it even with the +-0.015 noise; crop and
# weed greens differ so a learner can tell them apart by appearance.
_REFLECTANCE = {
    "soil": (0.21, 0.26, 0.24, 0.21),
    "crop": (0.15, 0.55, 0.18, 0.60),
    "weed": (0.17, 0.42, 0.22, 0.55),
}
_NOISE = 0.015


def _paint_disk(
    kind_grid: np.ndarray,
    row: float,
    col: float,
    radius: float,
    value: int,
    rng: np.random.Generator | None = None,
    raggedness: float = 0.0,
):
    height, width = kind_grid.shape
    r0 = max(0, int(math.floor(row - radius)))
    r1 = min(height, int(math.ceil(row + radius)) + 1)
    c0 = max(0, int(math.floor(col - radius)))
    c1 = min(width, int(math.ceil(col + radius)) + 1)
    if r0 >= r1 or c0 >= c1:
        return
    rr, cc = np.meshgrid(np.arange(r0, r1), np.arange(c0, c1), indexing="ij")
    dist2 = (rr - row) ** 2 + (cc - col) ** 2
    inside = dist2 <= radius * radius
    if raggedness > 0.0 and rng is not None:
        inside = inside & (rng.random(inside.shape) >= raggedness)
    kind_grid[r0:r1, c0:c1][inside] = value


def _paint_streak(
    kind_grid: np.ndarray,
    row: float,
    col: float,
    angle_deg: float,
    half_length: float,
    width: float,
    value: int,
    rng: np.random.Generator | None = None,
    raggedness: float = 0.0,
):
    """Elongated segment: |along| <= half_length, |across| <= width/2."""
    height, width_px = kind_grid.shape
    reach = half_length + width
    r0 = max(0, int(math.floor(row - reach)))
    r1 = min(height, int(math.ceil(row + reach)) + 1)
    c0 = max(0, int(math.floor(col - reach)))
    c1 = min(width_px, int(math.ceil(col + reach)) + 1)
    if r0 >= r1 or c0 >= c1:
        return
    rad = math.radians(angle_deg)
    ax, ay = math.cos(rad), math.sin(rad)
    rr, cc = np.meshgrid(np.arange(r0, r1), np.arange(c0, c1), indexing="ij")
    dx = cc - col
    dy = rr - row
    along = dx * ax + dy * ay
    across = -dx * ay + dy * ax
    inside = (np.abs(along) <= half_length) & (np.abs(across) <= width / 2.0)
    if raggedness > 0.0 and rng is not None:
        inside = inside & (rng.random(inside.shape) >= raggedness)
    kind_grid[r0:r1, c0:c1][inside] = value


def generate_synthetic_field(
    spec: SyntheticFieldSpec, map_id: str | None = None
) -> SyntheticField:
    """Render a field with exact ground truth.

    Crop blobs sit on evenly spaced parallel centerlines; intra-row weeds
    replace crop slots on the centerlines; inter-row weeds are rejection-
    sampled so every weed pixel stays at least ``inter_row_margin`` pixels
    from any centerline and no two blobs touch.
    """
    height, width = spec.dims
    if height < 8 or width < 8:
        raise InvalidParam("field dims too small")
    if spec.n_rows < 0:
        raise InvalidParam("n_rows must be >= 0")
    max_radius = spec.crop_blob_radius + spec.radius_jitter
    if spec.n_rows > 1 and (spec.n_rows - 1) * spec.row_spacing + 2 * max_radius > min(
        height, width
    ):
        raise InvalidParam("rows do not fit in the field dims")

    rng = np.random.default_rng(spec.rng_seed)
    cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
    phi = math.radians(spec.row_angle)
    dir_x, dir_y = math.cos(phi), math.sin(phi)
    nrm_x, nrm_y = -math.sin(phi), math.cos(phi)
    theta = (spec.row_angle + 90.0) % 180.0

    # 0 = soil, 1 = crop, 2 = weed
    kinds = np.zeros((height, width), dtype=np.uint8)

    rhos = [
        (i - (spec.n_rows - 1) / 2.0) * spec.row_spacing for i in range(spec.n_rows)
    ]
    row_lines = tuple((rho, theta) for rho in rhos)

    step = 2.0 * max_radius + 3.0
    half_span = math.hypot(height, width) / 2.0 + step
    slots = []  # (row_px, col_px, radius), centers guaranteed on a centerline
    for rho in rhos:
        t = -half_span
        while t <= half_span:
            jitter_t = rng.uniform(-1.0, 1.0)
            radius = spec.crop_blob_radius + rng.uniform(
                -spec.radius_jitter, spec.radius_jitter
            )
            px = rho * nrm_x + (t + jitter_t) * dir_x
            py = rho * nrm_y + (t + jitter_t) * dir_y
            row_px, col_px = py + cy, px + cx
            if -radius <= row_px < height + radius and -radius <= col_px < width + radius:
                slots.append((row_px, col_px, radius, rho))
            t += step

    weed_slots: set[int] = set()
    if spec.n_intra_row_weeds > 0:
        fully_inside = [
            i
            for i, (r, c, rad, _) in enumerate(slots)
            if rad + 1 <= r < height - rad - 1 and rad + 1 <= c < width - rad - 1
        ]
        if len(fully_inside) < spec.n_intra_row_weeds:
            raise InvalidParam("not enough row slots for the requested intra-row weeds")
        chosen = rng.choice(len(fully_inside), size=spec.n_intra_row_weeds, replace=False)
        weed_slots = {fully_inside[int(i)] for i in chosen}

    blob_centers = [(r, c, rad) for (r, c, rad, _) in slots]
    for i, (r, c, rad, _) in enumerate(slots):
        _paint_disk(kinds, r, c, rad, WEED if i in weed_slots else CROP,
                    rng=rng, raggedness=spec.blob_raggedness)

    streaky = spec.weed_shape == "streak"
    for _ in range(spec.n_inter_row_weeds):
        placed = False
        for _attempt in range(500):
            if streaky:
                radius = spec.streak_length / 2.0
                orient = rng.uniform(0.0, 180.0)
            else:
                radius = spec.crop_blob_radius + rng.uniform(
                    -spec.radius_jitter, spec.radius_jitter
                )
                orient = 0.0
            row_px = rng.uniform(radius + 1, height - radius - 1)
            col_px = rng.uniform(radius + 1, width - radius - 1)
            x, y = col_px - cx, row_px - cy
            if spec.scatter_region == "disk" and math.hypot(x, y) > (
                min(height, width) / 2.0 - radius - 1
            ):
                continue
            proj = x * nrm_x + y * nrm_y
            dist_to_rows = min((abs(proj - rho) for rho in rhos), default=math.inf)
            if dist_to_rows < spec.inter_row_margin + radius:
                continue
            # Streaks may cross each other (their angles are what matters);
            # disks must stay separated so instances do not merge.
            min_sep = spec.streak_width + 2.0 if streaky else None
            if any(
                math.hypot(row_px - r, col_px - c)
                < (min_sep if streaky else radius + rad + 2.0)
                for r, c, rad in blob_centers
            ):
                continue
            if streaky:
                _paint_streak(
                    kinds, row_px, col_px, orient, radius, spec.streak_width,
                    WEED, rng=rng, raggedness=spec.blob_raggedness,
                )
            else:
                _paint_disk(kinds, row_px, col_px, radius, WEED,
                            rng=rng, raggedness=spec.blob_raggedness)
            blob_centers.append((row_px, col_px, radius))
            placed = True
            break
        if not placed:
            raise InvalidParam("cannot fit inter-row weeds with the given geometry")

    channels: dict[str, np.ndarray] = {}
    for ch_idx, name in enumerate(CHANNEL_ORDER):
        base = np.empty((height, width), dtype=np.float64)
        for kind_value, kind_name in ((0, "soil"), (CROP, "crop"), (WEED, "weed")):
            base[kinds == kind_value] = _REFLECTANCE[kind_name][ch_idx]
        noise = rng.uniform(-_NOISE, _NOISE, size=(height, width))
        channels[name] = np.clip(base + noise, 0.0, 1.0)

    field_map = FieldMap(
        map_id=map_id if map_id is not None else f"{spec.rng_seed:03d}",
        channels={"nir": Raster(channels["nir"]), "red": Raster(channels["red"]),
                  "green": Raster(channels["green"]), "blue": Raster(channels["blue"])},
        gt=ClassMask(kinds),
        alignment_angle=-spec.row_angle if spec.n_rows else 0.0,
    )
    return SyntheticField(field_map=field_map, row_lines=row_lines, spec=spec)


# ---------------------------------------------------------------------------
# Disk layout
# ---------------------------------------------------------------------------

_DEFAULT_CHANNEL_DIRS = {"red": "R", "green": "G", "blue": "B", "nir": "NIR"}


def _tile_sort_key(path: Path):
    m = re.match(r"^(\d+)", path.stem)
    return (0, int(m.group(1)), path.stem) if m else (1, 0, path.stem)


def load_root_manifest(root: Path) -> dict:
    manifest_path = Path(root) / MANIFEST_NAME
    if manifest_path.exists():
        return json.loads(manifest_path.read_text())
    return {}


def channel_dirs_from_manifest(manifest: dict) -> dict[str, str]:
    dirs = dict(_DEFAULT_CHANNEL_DIRS)
    dirs.update(manifest.get("channels", {}))
    return dirs


def discover_map_ids(root: str | Path) -> list[str]:
    """Map ids are the subdirectories of the dataset root that contain at
    least one channel subdirectory."""
    root = Path(root)
    ids = []
    for entry in sorted(root.iterdir()) if root.is_dir() else []:
        if entry.is_dir() and any(p.is_dir() for p in entry.iterdir()):
            ids.append(entry.name)
    return ids


def load_tiles(
    root: str | Path,
    map_id: str,
    channel_dirs: dict[str, str],
    tile_size: int,
    alignment_angle: float | None = None,
) -> list[Tile]:
    """Load one map's tiles. A single file per channel is a full map to be
    tiled; multiple files are pre-cut tiles matched by filename."""
    root = Path(root)
    map_dir = root / map_id
    files_by_channel: dict[str, list[Path]] = {}
    for name, sub in channel_dirs.items():
        if sub is None:
            continue
        ch_dir = map_dir / sub
        if not ch_dir.is_dir():
            continue
        files = sorted(
            [p for p in ch_dir.iterdir() if p.suffix.lower() in (".png", ".tif", ".tiff")],
            key=_tile_sort_key,
        )
        if files:
            files_by_channel[name] = files
    if not files_by_channel:
        raise FileNotFoundError(f"no channel images found under {map_dir}")
    counts = {len(v) for v in files_by_channel.values()}
    if len(counts) != 1:
        raise InvalidParam(f"map {map_id}: channel dirs hold differing tile counts")
    n_files = counts.pop()
    stems = {name: [p.stem for p in files] for name, files in files_by_channel.items()}
    first = next(iter(stems.values()))
    if any(s != first for s in stems.values()):
        raise InvalidParam(f"map {map_id}: tile filenames differ across channels")

    gt_dir = map_dir / GROUNDTRUTH_DIR
    gt_files = None
    if gt_dir.is_dir():
        gt_files = sorted(
            [p for p in gt_dir.iterdir() if p.suffix.lower() in (".png", ".tif", ".tiff")],
            key=_tile_sort_key,
        )
        if len(gt_files) != n_files:
            raise InvalidParam(f"map {map_id}: ground-truth tile count mismatch")

    if n_files == 1:
        channels = {n: read_channel_raster(files[0]) for n, files in files_by_channel.items()}
        gt = read_classmask_png(gt_files[0]) if gt_files else None
        fmap = FieldMap(map_id, channels, gt, alignment_angle)
        if fmap.shape[0] > tile_size or fmap.shape[1] > tile_size:
            return tile_map(fmap, tile_size)
        return [
            Tile(map_id, 0, channels, gt, alignment_angle)
        ]

    tiles = []
    for idx in range(n_files):
        channels = {n: read_channel_raster(files[idx]) for n, files in files_by_channel.items()}
        gt = read_classmask_png(gt_files[idx]) if gt_files else None
        tiles.append(Tile(map_id, idx, channels, gt, alignment_angle))
    return tiles


def write_map_tiles(
    fmap: FieldMap,
    root: str | Path,
    tile_size: int,
    channel_dirs: dict[str, str] | None = None,
) -> int:
    """Write a map as per-channel tile PNGs (plus ground truth when present)
    in the standard layout. Returns the tile count."""
    channel_dirs = channel_dirs or _DEFAULT_CHANNEL_DIRS
    root = Path(root)
    tiles = tile_map(fmap, tile_size) if max(fmap.shape) > tile_size else None
    if tiles is None:
        tiles = [Tile(fmap.map_id, 0, fmap.channels, fmap.gt, fmap.alignment_angle)]
    for tile in tiles:
        for name, raster in tile.channels.items():
            sub = channel_dirs.get(name, name.upper())
            ch_dir = root / fmap.map_id / sub
            ch_dir.mkdir(parents=True, exist_ok=True)
            write_channel_png(raster, ch_dir / f"{tile.index}.png")
        if tile.gt is not None:
            gt_dir = root / fmap.map_id / GROUNDTRUTH_DIR
            gt_dir.mkdir(parents=True, exist_ok=True)
            write_classmask_png(tile.gt, gt_dir / f"{tile.index}.png")
    return len(tiles)
