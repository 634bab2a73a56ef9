"""Density-based discretization of continuous features.

Continuous features are clustered per-feature (1-D) with an OPTICS sweep at
epsilon = infinity, and each cluster becomes one half-open value range, so
continuous features can participate in set-literal constraints. Gaps between
ranges are rejected by default: values falling there receive the NO_BIN
sentinel and can never satisfy a learned literal.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

NO_BIN = -1


@dataclass(frozen=True)
class OpticsOrdering:
    """OPTICS output: a visit order and per-point reachability distances.

    ``reachability`` is indexed by point id; the sweep's starting point keeps
    +infinity.
    """

    order: np.ndarray
    reachability: np.ndarray


@dataclass(frozen=True)
class BinSet:
    """Sorted disjoint half-open ``[lo, hi)`` ranges.

    ``extend_edges`` records the out-of-range policy: when True, values below
    the first range map to bin 0 and values at or above the last range map to
    the last bin instead of the NO_BIN sentinel.
    """

    ranges: tuple[tuple[float, float], ...]
    extend_edges: bool = False


@dataclass(frozen=True)
class DiscretizerConfig:
    min_pts: int = 5
    threshold_quantile: float = 0.95
    subsample: float = 1.0
    seed: int = 0
    extend_edges: bool = False


def _core_distances(points: np.ndarray, min_pts: int) -> np.ndarray:
    """Distance to the min_pts-th nearest neighbor (self included), chunked
    to keep the pairwise block small."""
    m = len(points)
    out = np.empty(m, dtype=np.float64)
    chunk = max(1, int(4_000_000 // max(1, m)))
    for start in range(0, m, chunk):
        block = np.abs(points[start : start + chunk, None] - points[None, :])
        out[start : start + chunk] = np.partition(block, min_pts - 1, axis=1)[:, min_pts - 1]
    return out


def optics_order(points, min_pts: int) -> OpticsOrdering:
    """Standard OPTICS ordering with epsilon = infinity over 1-D points.

    Ties on reachability break toward the lowest point index, which makes the
    ordering fully deterministic.
    """
    pts = np.asarray(points, dtype=np.float64).ravel()
    if min_pts < 2:
        raise ValidationError("min_pts must be at least 2")
    if len(pts) < min_pts:
        raise ValidationError(
            f"need at least min_pts={min_pts} points, got {len(pts)}; "
            "lower min_pts or raise the subsampling fraction"
        )
    m = len(pts)
    core = _core_distances(pts, min_pts)
    reach = np.full(m, np.inf)
    work = np.full(m, np.inf)
    processed = np.zeros(m, dtype=bool)
    order = np.empty(m, dtype=np.int64)

    current = 0
    for step in range(m):
        order[step] = current
        processed[current] = True
        reach[current] = work[current]
        cand = np.maximum(core[current], np.abs(pts - pts[current]))
        np.minimum(work, cand, out=work)
        if step + 1 == m:
            break
        masked = np.where(processed, np.inf, work)
        current = int(np.argmin(masked))  # argmin takes the lowest index on ties
    return OpticsOrdering(order, reach)


def extract_bins(
    ordering: OpticsOrdering,
    points,
    threshold_quantile: float,
    *,
    extend_edges: bool = False,
) -> BinSet:
    """Cut the reachability plot where it exceeds the given quantile of all
    finite reachabilities; each resulting cluster becomes one range
    ``[min, max + ulp)``. Overlapping ranges (possible on pathological
    orderings) are merged to keep the bin set disjoint."""
    pts = np.asarray(points, dtype=np.float64).ravel()
    if len(pts) != len(ordering.order):
        raise ValidationError("ordering and points disagree in length")
    if not 0.0 < threshold_quantile <= 1.0:
        raise ValidationError("threshold_quantile must be in (0, 1]")
    reach_in_order = ordering.reachability[ordering.order]
    finite = reach_in_order[np.isfinite(reach_in_order)]
    threshold = float(np.quantile(finite, threshold_quantile)) if len(finite) else math.inf
    # relative margin so reachabilities tied with the threshold up to float
    # rounding do not open spurious boundaries
    cut = threshold * (1.0 + 1e-9) + 1e-12

    clusters: list[list[int]] = []
    for pos, idx in enumerate(ordering.order):
        r = reach_in_order[pos]
        if pos == 0 or not np.isfinite(r) or r > cut:
            clusters.append([])
        clusters[-1].append(int(idx))

    ranges = []
    for members in clusters:
        vals = pts[members]
        lo = float(vals.min())
        hi = math.nextafter(float(vals.max()), math.inf)
        ranges.append((lo, hi))
    ranges.sort()
    merged = [ranges[0]]
    for lo, hi in ranges[1:]:
        plo, phi = merged[-1]
        if lo < phi:
            merged[-1] = (plo, max(phi, hi))
        else:
            merged.append((lo, hi))
    return BinSet(tuple(merged), extend_edges)


def assign_bin(value: float, bins: BinSet) -> int:
    """Index of the range containing ``value``, by binary search; gap values
    map to the NO_BIN sentinel unless the bin set extends its edges."""
    ranges = bins.ranges
    if not ranges:
        raise ValidationError("empty bin set")
    pos = bisect_right(ranges, (value, math.inf)) - 1
    if pos >= 0:
        lo, hi = ranges[pos]
        if value < hi:
            return pos
    if bins.extend_edges:
        # only the outer edges extend; interior gaps stay prohibited
        if pos < 0:
            return 0
        if value >= ranges[-1][1]:
            return len(ranges) - 1
    return NO_BIN


def fit_feature_bins(values, config: DiscretizerConfig) -> BinSet:
    """Discretize one continuous feature: optional seeded subsample, OPTICS
    ordering, quantile cut."""
    vals = np.asarray(values, dtype=np.float64).ravel()
    if not 0.0 < config.subsample <= 1.0:
        raise ValidationError("subsample fraction must be in (0, 1]")
    if config.subsample < 1.0:
        rng = np.random.default_rng(config.seed)
        keep = max(config.min_pts, int(round(config.subsample * len(vals))))
        if keep > len(vals):
            raise ValidationError(
                f"subsample of {len(vals)} points at fraction {config.subsample} leaves fewer "
                f"than min_pts={config.min_pts}; raise the fraction or lower min_pts"
            )
        vals = vals[np.sort(rng.choice(len(vals), size=keep, replace=False))]
    ordering = optics_order(vals, config.min_pts)
    return extract_bins(
        ordering, vals, config.threshold_quantile, extend_edges=config.extend_edges
    )


def discretize_dataset(dataset, config: DiscretizerConfig):
    """Fit bins for every continuous feature and return the schema with the
    bins written in. Per-feature work is independent (and trivially parallel);
    it runs sequentially here for determinism."""
    schema = dataset.schema
    bins_by_feature = {}
    for i, f in enumerate(schema.features):
        if f.is_discrete:
            continue
        col = [r.values[i] for r in dataset.rows]
        bins_by_feature[i] = fit_feature_bins(col, config).ranges
    return schema.with_bins(bins_by_feature)
