"""Vegetation indices, thresholding, and plant-instance extraction.

A plant instance is a group of vegetation pixels labeled as one unit,
obtained either from 8-connected components of the vegetation mask or by
intersecting SLIC superpixels with it. Either way the instances partition
the vegetation mask exactly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, InvalidParam
from .raster import BinaryMask, Raster


class InstanceSource(enum.Enum):
    CONNECTED_COMPONENT = "cc"
    SUPERPIXEL = "slic"


@dataclass(frozen=True)
class PlantInstance:
    """One detected plant: a nonempty pixel set plus its provenance.

    ``pixels`` is an (n, 2) int array of (row, col) coordinates in
    raster-scan order; across the instances of one tile the pixel sets are
    pairwise disjoint and their union is the vegetation mask.
    """

    id: int
    pixels: np.ndarray
    source: InstanceSource

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.int64)
        if px.ndim != 2 or px.shape[1] != 2 or px.shape[0] == 0:
            raise ValueError("instance pixels must be a nonempty (n, 2) array")
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @property
    def size(self) -> int:
        return self.pixels.shape[0]


def _require_same_shape(*rasters: Raster) -> None:
    shapes = {r.shape for r in rasters}
    if len(shapes) > 1:
        raise DimensionMismatch(f"channel shapes differ: {sorted(shapes)}")


def compute_ndvi(nir: Raster, red: Raster) -> Raster:
    """Normalized difference vegetation index (NIR - R) / (NIR + R).

    Pixels where NIR + R = 0 map to 0: zero-reflectance pixels are bare
    soil, not vegetation.
    """
    _require_same_shape(nir, red)
    num = nir.values - red.values
    den = nir.values + red.values
    out = np.divide(num, den, out=np.zeros_like(num), where=den != 0)
    return Raster(out)


def compute_excess_green(red: Raster, green: Raster, blue: Raster) -> Raster:
    """Excess-green index 2G - R - B, clamped to [-2, 2]. RGB-only fallback
    for tiles without a NIR channel."""
    _require_same_shape(red, green, blue)
    out = 2.0 * green.values - red.values - blue.values
    return Raster(np.clip(out, -2.0, 2.0))


def threshold_vegetation(index: Raster, threshold: float) -> BinaryMask:
    """Vegetation mask by strict thresholding: pixel set iff value > threshold."""
    return BinaryMask(index.values > threshold)


_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


def connected_components(mask: BinaryMask) -> list[PlantInstance]:
    """Split the vegetation mask into 8-connected components.

    Instance ids are dense from 1, assigned in raster-scan order of each
    component's first pixel, so the labeling is deterministic.
    """
    labeled, n = ndimage.label(mask.bits, structure=_EIGHT_CONNECTED)
    if n == 0:
        return []
    flat = labeled.ravel()
    set_idx = np.flatnonzero(flat)
    # Order components by the flat index of their first pixel.
    order = {}
    for idx in set_idx:
        lab = flat[idx]
        if lab not in order:
            order[lab] = len(order) + 1
            if len(order) == n:
                break
    instances = []
    objects = ndimage.find_objects(labeled)
    by_new_id = sorted(order.items(), key=lambda kv: kv[1])
    for old_label, new_id in by_new_id:
        sl = objects[old_label - 1]
        rows, cols = np.nonzero(labeled[sl] == old_label)
        rows = rows + sl[0].start
        cols = cols + sl[1].start
        scan = np.argsort(rows * mask.width + cols, kind="stable")
        pixels = np.stack([rows[scan], cols[scan]], axis=1)
        instances.append(PlantInstance(new_id, pixels, InstanceSource.CONNECTED_COMPONENT))
    return instances


def _seed_grid(height: int, width: int, n_clusters: int) -> np.ndarray:
    """Regular-grid seed positions (n, 2) as float (row, col), row-major."""
    ny = max(1, int(round(math.sqrt(n_clusters * height / width))))
    ny = min(ny, n_clusters)
    nx = math.ceil(n_clusters / ny)
    ys = (np.arange(ny) + 0.5) * height / ny
    xs = (np.arange(nx) + 0.5) * width / nx
    grid = np.stack(np.meshgrid(ys, xs, indexing="ij"), axis=-1).reshape(-1, 2)
    return grid[:n_clusters]


def slic_superpixels(
    channels: list[Raster],
    n_clusters: int,
    compactness: float = 20.0,
    sigma: float = 1.0,
    n_iter: int = 10,
) -> np.ndarray:
    """SLIC superpixel labeling over the given channels jointly.

    Localized k-means in (color..., y*m/S, x*m/S) space, where m is the
    compactness and S the seed grid interval. Channels are pre-smoothed
    with a Gaussian of std ``sigma``, cluster seeds sit on a regular grid,
    and the iteration count is fixed, so the result is deterministic.
    Every pixel receives exactly one 0-based label.

    Args:
        channels: nonempty list of equal-sized rasters (the color features).
        n_clusters: requested superpixel count, 1 <= n <= pixel count.
        compactness: spatial-vs-color weight m.
        sigma: Gaussian pre-smoothing std in pixels (0 disables).
        n_iter: k-means iterations.

    Returns:
        (H, W) int array of superpixel labels in [0, n_clusters).
    """
    if not channels:
        raise InvalidParam("need at least one channel")
    _require_same_shape(*channels)
    height, width = channels[0].shape
    if n_clusters < 1 or n_clusters > height * width:
        raise InvalidParam(f"n_clusters={n_clusters} outside [1, {height * width}]")

    if sigma > 0:
        feat = np.stack([ndimage.gaussian_filter(c.values, sigma) for c in channels], axis=-1)
    else:
        feat = np.stack([c.values for c in channels], axis=-1)

    interval = math.sqrt(height * width / n_clusters)
    ratio = compactness / interval
    seeds = _seed_grid(height, width, n_clusters)

    color = feat[
        np.clip(np.floor(seeds[:, 0] + 0.5).astype(int), 0, height - 1),
        np.clip(np.floor(seeds[:, 1] + 0.5).astype(int), 0, width - 1),
    ]
    pos = seeds.copy()

    rows, cols = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    for _ in range(n_iter):
        best = np.full((height, width), np.inf)
        labels = np.full((height, width), -1, dtype=np.int64)
        reach = max(1, int(math.ceil(2 * interval)))
        for k in range(len(pos)):
            yc, xc = pos[k]
            r0 = max(0, int(math.floor(yc)) - reach)
            r1 = min(height, int(math.ceil(yc)) + reach + 1)
            c0 = max(0, int(math.floor(xc)) - reach)
            c1 = min(width, int(math.ceil(xc)) + reach + 1)
            if r0 >= r1 or c0 >= c1:
                continue
            window = feat[r0:r1, c0:c1]
            d_color = np.sum((window - color[k]) ** 2, axis=-1)
            dy = (rows[r0:r1, c0:c1] - yc) * ratio
            dx = (cols[r0:r1, c0:c1] - xc) * ratio
            dist = d_color + dy * dy + dx * dx
            better = dist < best[r0:r1, c0:c1]
            best[r0:r1, c0:c1][better] = dist[better]
            labels[r0:r1, c0:c1][better] = k

        missing = labels < 0
        if missing.any():
            mr, mc = np.nonzero(missing)
            d_color = np.sum(
                (feat[mr, mc][:, None, :] - color[None, :, :]) ** 2, axis=-1
            )
            dy = (mr[:, None] - pos[None, :, 0]) * ratio
            dx = (mc[:, None] - pos[None, :, 1]) * ratio
            labels[mr, mc] = np.argmin(d_color + dy * dy + dx * dx, axis=1)

        flat = labels.ravel()
        counts = np.bincount(flat, minlength=len(pos)).astype(float)
        nonempty = counts > 0
        sum_y = np.bincount(flat, weights=rows.ravel(), minlength=len(pos))
        sum_x = np.bincount(flat, weights=cols.ravel(), minlength=len(pos))
        pos[nonempty, 0] = sum_y[nonempty] / counts[nonempty]
        pos[nonempty, 1] = sum_x[nonempty] / counts[nonempty]
        for c in range(feat.shape[-1]):
            sums = np.bincount(flat, weights=feat[..., c].ravel(), minlength=len(pos))
            color[nonempty, c] = sums[nonempty] / counts[nonempty]

    return labels


def default_cluster_count(height: int, width: int, coefficient: float = 0.005) -> int:
    """Superpixel count n = floor(coefficient * H * W), at least 1."""
    return max(1, int(math.floor(coefficient * height * width)))


def instances_from_superpixels(labels: np.ndarray, mask: BinaryMask) -> list[PlantInstance]:
    """One instance per superpixel that contains vegetation pixels.

    Instance pixels are the superpixel's intersection with the vegetation
    mask, so instances partition the mask. Ids are dense from 1 in
    raster-scan order of each instance's first vegetation pixel.
    """
    labels = np.asarray(labels)
    if labels.shape != mask.shape:
        raise DimensionMismatch(f"label grid {labels.shape} vs mask {mask.shape}")
    veg_rows, veg_cols = np.nonzero(mask.bits)
    if len(veg_rows) == 0:
        return []
    veg_labels = labels[veg_rows, veg_cols]
    instances = []
    seen: dict[int, int] = {}
    # nonzero() already yields raster-scan order, so first occurrence of each
    # superpixel label fixes the instance ordering.
    for lab in veg_labels:
        if lab not in seen:
            seen[lab] = len(seen) + 1
    for lab, new_id in sorted(seen.items(), key=lambda kv: kv[1]):
        sel = veg_labels == lab
        pixels = np.stack([veg_rows[sel], veg_cols[sel]], axis=1)
        instances.append(PlantInstance(new_id, pixels, InstanceSource.SUPERPIXEL))
    return instances
