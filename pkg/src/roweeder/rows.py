"""Crop-row detection: Hough transform, angle-uniformity filter, rasterization.

Lines are parameterized as x*cos(theta) + y*sin(theta) = rho with theta in
[0, 180) degrees and (x, y) measured from the image center (x right,
y down). A horizontal image row therefore has theta = 90 and rho equal to
its signed vertical offset from the center; |rho| never exceeds half the
tile diagonal. Fields whose detected angles are uniformly distributed are
weed-filled false positives, so all their lines are discarded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import kolmogorov

from .errors import EmptyInput, EmptyMask, InvalidParam
from .raster import BinaryMask


@dataclass(frozen=True)
class HoughLine:
    rho: float  # signed pixels from image center
    theta: float  # degrees in [0, 180)
    votes: int  # mask pixels on the accumulator cell


@dataclass(frozen=True)
class RowDetection:
    """Outcome of line detection plus the angle-uniformity filter."""

    lines: tuple[HoughLine, ...]
    retained: bool
    ks_statistic: float
    p_value: float


def hough_center(height: int, width: int) -> tuple[int, int]:
    """(cy, cx) pivot shared by the accumulator and the rasterizer.

    An integer center keeps axis-aligned pixel rows/columns at integer rho,
    i.e. at rho-bin centers: with a fractional center their rho would sit
    exactly on bin boundaries and float noise would split their votes
    between two bins. At most half a pixel from the geometric center.
    """
    return (height - 1) // 2, (width - 1) // 2


def accumulator_bins(
    height: int, width: int, theta_step: float, rho_step: float
) -> tuple[int, int]:
    """(n_rho, n_theta) accumulator dimensions for a given tile size."""
    n_theta = int(round(180.0 / theta_step))
    cy, cx = hough_center(height, width)
    rho_max = math.hypot(max(cx, width - 1 - cx), max(cy, height - 1 - cy))
    n_half = int(math.ceil(rho_max / rho_step))
    return 2 * n_half + 1, n_theta


def hough_accumulator(
    mask: BinaryMask, theta_step: float = 1.0, rho_step: float = 1.0
) -> np.ndarray:
    """Vote accumulator over (rho, theta) cells for all set pixels.

    Cell (i, k) covers rho = (i - n_rho//2) * rho_step and
    theta = k * theta_step; a pixel votes for the cell whose rho is nearest
    to its exact x*cos(theta) + y*sin(theta) at every theta.
    """
    if theta_step <= 0 or rho_step <= 0:
        raise InvalidParam("theta_step and rho_step must be positive")
    n_rho, n_theta = accumulator_bins(mask.height, mask.width, theta_step, rho_step)
    n_half = n_rho // 2
    acc = np.zeros((n_rho, n_theta), dtype=np.int64)
    rows, cols = np.nonzero(mask.bits)
    if len(rows) == 0:
        return acc
    cy, cx = hough_center(mask.height, mask.width)
    x = cols - cx
    y = rows - cy
    for k in range(n_theta):
        theta = math.radians(k * theta_step)
        rho = x * math.cos(theta) + y * math.sin(theta)
        idx = np.floor(rho / rho_step + 0.5).astype(np.int64) + n_half
        acc[:, k] += np.bincount(idx, minlength=n_rho)
    return acc


def _suppress_non_maxima(acc: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Keep candidate cells that dominate their 3x3 accumulator neighborhood.

    Ties are broken by raster order within the accumulator: of two equal
    adjacent cells the earlier one survives. Deterministic by construction.
    """
    n_rho, n_theta = acc.shape
    keep = []
    for i, k in candidates:
        winner = True
        for di in (-1, 0, 1):
            for dk in (-1, 0, 1):
                if di == 0 and dk == 0:
                    continue
                ni, nk = i + di, k + dk
                if not (0 <= ni < n_rho and 0 <= nk < n_theta):
                    continue
                v_n = acc[ni, nk]
                v = acc[i, k]
                if v_n > v or (v_n == v and (ni, nk) < (i, k)):
                    winner = False
                    break
            if not winner:
                break
        if winner:
            keep.append((i, k))
    return np.array(keep, dtype=np.int64).reshape(-1, 2)


def hough_lines(
    mask: BinaryMask,
    theta_step: float = 1.0,
    rho_step: float = 1.0,
    threshold: int = 160,
) -> list[HoughLine]:
    """Detect lines as accumulator cells with votes >= threshold.

    Near-duplicate cells are removed by 3x3 non-maximum suppression so
    each physical row yields one line; the survivors are sorted by votes
    descending, ties by (theta, rho) ascending.
    """
    if threshold < 1:
        raise InvalidParam("threshold must be >= 1")
    acc = hough_accumulator(mask, theta_step, rho_step)
    cand = np.argwhere(acc >= threshold)
    if len(cand) == 0:
        return []
    keep = _suppress_non_maxima(acc, cand)
    n_half = acc.shape[0] // 2
    lines = [
        HoughLine(
            rho=(int(i) - n_half) * rho_step,
            theta=int(k) * theta_step,
            votes=int(acc[i, k]),
        )
        for i, k in keep
    ]
    lines.sort(key=lambda l: (-l.votes, l.theta, l.rho))
    return lines


# ---------------------------------------------------------------------------
# Angle-uniformity (Kolmogorov-Smirnov) filter
# ---------------------------------------------------------------------------

MIN_KS_SAMPLES = 4  # below this the asymptotic p-value is unreliable: keep lines


def ks_uniformity_test(
    thetas: list[float] | np.ndarray, alpha: float
) -> tuple[float, float, bool]:
    """One-sample KS test of angles against Uniform(0, 180) degrees.

    Returns (statistic, p_value, uniform) where the statistic is the
    supremum gap between the empirical CDF and t/180, the p-value comes
    from the asymptotic Kolmogorov distribution evaluated at
    D * (sqrt(n) + 0.12 + 0.11/sqrt(n)), and uniform = p_value > alpha.
    With fewer than 4 samples uniform is always False (discarding a
    field's only rows is the costlier error).
    """
    thetas = np.asarray(thetas, dtype=np.float64)
    if thetas.size == 0:
        raise EmptyInput("KS test needs at least one angle")
    if not 0.0 < alpha < 1.0:
        raise InvalidParam("alpha must be in (0, 1)")
    n = thetas.size
    ref = np.clip(np.sort(thetas) / 180.0, 0.0, 1.0)
    above = np.arange(1, n + 1) / n - ref
    below = ref - np.arange(0, n) / n
    statistic = float(max(above.max(), below.max()))
    scale = math.sqrt(n) + 0.12 + 0.11 / math.sqrt(n)
    p_value = float(kolmogorov(scale * statistic))
    uniform = n >= MIN_KS_SAMPLES and p_value > alpha
    return statistic, p_value, uniform


def filter_lines(lines: list[HoughLine], alpha: float = 0.1) -> RowDetection:
    """Discard every line when the theta distribution looks uniform.

    Uniform angles mean the detections are false positives from weed-filled
    tiles; concentrated angles mean true rows, which are all kept.
    """
    if not lines:
        return RowDetection(lines=(), retained=False, ks_statistic=0.0, p_value=1.0)
    thetas = [l.theta for l in lines]
    statistic, p_value, uniform = ks_uniformity_test(thetas, alpha)
    if uniform:
        return RowDetection(lines=(), retained=False, ks_statistic=statistic, p_value=p_value)
    return RowDetection(
        lines=tuple(lines), retained=True, ks_statistic=statistic, p_value=p_value
    )


# ---------------------------------------------------------------------------
# Rasterization
# ---------------------------------------------------------------------------


def _draw_line(out: np.ndarray, rho: float, theta_deg: float) -> None:
    """Bresenham-style midpoint traversal of one line, in place.

    Walks the major axis (one pixel per step), rounding the minor
    coordinate, so a single line sets at most max(width, height) pixels.
    """
    height, width = out.shape
    cy, cx = hough_center(height, width)
    rad = math.radians(theta_deg)
    cos_t, sin_t = math.cos(rad), math.sin(rad)
    if abs(sin_t) >= abs(cos_t):
        # Closer to horizontal: iterate columns, solve y.
        for c in range(width):
            x = c - cx
            y = (rho - x * cos_t) / sin_t
            r = int(math.floor(y + cy + 0.5))
            if 0 <= r < height:
                out[r, c] = True
    else:
        for r in range(height):
            y = r - cy
            x = (rho - y * sin_t) / cos_t
            c = int(math.floor(x + cx + 0.5))
            if 0 <= c < width:
                out[r, c] = True


def rasterize_rows(
    detection: RowDetection, width: int, height: int, thickness: int = 2
) -> BinaryMask:
    """Draw the retained lines into a mask, thickened to ``thickness`` pixels.

    Thickness t is realized as t parallel Bresenham lines at rho offsets
    -((t-1)//2) .. t//2, so every set pixel lies within t/2 of the analytic
    line. A detection with retained=False produces an all-false mask.
    """
    if thickness < 1:
        raise InvalidParam("thickness must be >= 1")
    out = np.zeros((height, width), dtype=bool)
    if not detection.retained:
        return BinaryMask(out)
    offsets = range(-((thickness - 1) // 2), thickness // 2 + 1)
    for line in detection.lines:
        for off in offsets:
            _draw_line(out, line.rho + off, line.theta)
    return BinaryMask(out)


# ---------------------------------------------------------------------------
# Alignment estimation
# ---------------------------------------------------------------------------


def estimate_alignment_angle(
    mask: BinaryMask, theta_step: float = 1.0, rho_step: float = 1.0
) -> float:
    """Rotation (degrees) that would make the dominant line family horizontal.

    Runs the Hough transform with a low threshold (half the peak vote) and
    returns 90 minus the vote-weighted circular mean of the detected
    angles, normalized to (-90, 90]. Use when the per-field rotation angle
    is not supplied by configuration.
    """
    acc = hough_accumulator(mask, theta_step, rho_step)
    peak = int(acc.max())
    if peak == 0:
        raise EmptyMask("cannot estimate alignment of an empty mask")
    threshold = max(1, (peak + 1) // 2)
    lines = hough_lines(mask, theta_step, rho_step, threshold)
    sin2 = sum(l.votes * math.sin(math.radians(2 * l.theta)) for l in lines)
    cos2 = sum(l.votes * math.cos(math.radians(2 * l.theta)) for l in lines)
    mean_theta = math.degrees(0.5 * math.atan2(sin2, cos2)) % 180.0
    angle = 90.0 - mean_theta
    if angle <= -90.0:
        angle += 180.0
    elif angle > 90.0:
        angle -= 180.0
    return angle
