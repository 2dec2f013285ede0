"""Whitespace recovery, majority decoding and transmitter localization."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .field_model import Deployment
from .geometry import DisjointRegionSet

DEFAULT_CELL_C = 4.0

# Guards floor(w / 2r) against w landing a few ulps below an exact multiple.
_FLOOR_SLACK = 1e-9


def reconstruct_void(deployment: Deployment) -> DisjointRegionSet:
    """Union of the clipped clearance intervals of every sensor reading 0."""
    b = deployment.require_readings()
    quiet = np.sort(deployment.sensor_locations[b == 0])
    return DisjointRegionSet.clearance(quiet, deployment.radio_range)


def recovery_loss(void: DisjointRegionSet) -> float:
    return 1.0 - void.measure()


# ---------------------------------------------------------------------------
# Majority decoding


def num_cells(cell_width: float) -> int:
    if not 0.0 < cell_width <= 1.0:
        raise ValueError(f"cell width must be in (0, 1], got {cell_width}")
    k = math.ceil(1.0 / cell_width)
    while k > 1 and (k - 1) * cell_width >= 1.0:
        k -= 1
    return k


def cell_index(x: np.ndarray, cell_width: float) -> np.ndarray:
    k = num_cells(cell_width)
    return np.minimum(np.floor(np.asarray(x) / cell_width).astype(np.int64), k - 1)


def default_cell_width(n: int, c: float = DEFAULT_CELL_C) -> float:
    """``c log n / n`` capped at 1."""
    if n < 2:
        raise ValueError("cell width c*log(n)/n needs n >= 2")
    return min(c * math.log(n) / n, 1.0)


class Cell(NamedTuple):
    index: int
    lo: float
    hi: float
    sensor_count: int
    voters: int
    ones_count: int
    present: bool


@dataclass(frozen=True, eq=False)
class DecodeGrid:
    """Per-cell tallies of a majority decode.

    ``sensor_count`` counts every sensor in the cell; ``voters`` is the odd
    number actually used (one dropped from even cells); ``ones`` counts
    1-readings among the voters.
    """

    cell_width: float
    sensor_count: np.ndarray
    voters: np.ndarray
    ones: np.ndarray
    present: np.ndarray

    @property
    def n_cells(self) -> int:
        return int(self.present.size)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        k = np.arange(self.n_cells)
        return k * self.cell_width, np.minimum((k + 1) * self.cell_width, 1.0)

    @property
    def cells(self) -> list[Cell]:
        lo, hi = self.bounds()
        return [
            Cell(k, float(lo[k]), float(hi[k]), int(self.sensor_count[k]), int(self.voters[k]),
                 int(self.ones[k]), bool(self.present[k]))
            for k in range(self.n_cells)
        ]

    def void(self) -> DisjointRegionSet:
        """Union of the cells voted absent."""
        lo, hi = self.bounds()
        return DisjointRegionSet.from_arrays(lo[~self.present], hi[~self.present])

    def occupied(self) -> DisjointRegionSet:
        lo, hi = self.bounds()
        return DisjointRegionSet.from_arrays(lo[self.present], hi[self.present])


def majority_decode(deployment: Deployment, cell_width: float) -> DecodeGrid:
    """Per-cell strict-majority vote on the readings.

    Cells with an even number of sensors drop their highest-indexed sensor
    before voting, so ties cannot occur.  Empty cells vote absent.
    """
    b = deployment.require_readings().astype(np.int64)
    k_total = num_cells(cell_width)
    cell = cell_index(deployment.sensor_locations, cell_width)
    counts = np.bincount(cell, minlength=k_total)
    ones = np.bincount(cell, weights=b, minlength=k_total).astype(np.int64)
    last = np.full(k_total, -1, dtype=np.int64)
    np.maximum.at(last, cell, np.arange(b.size))
    even = (counts > 0) & (counts % 2 == 0)
    voters = counts - even
    if b.size:
        ones = ones - np.where(even, b[np.where(even, last, 0)], 0)
    present = 2 * ones > voters
    return DecodeGrid(float(cell_width), counts, voters, ones, present)


# ---------------------------------------------------------------------------
# Localization


@dataclass(frozen=True, eq=False)
class LocalizationResult:
    est_count: int
    est_locations: np.ndarray
    error: float
    truth_count: int
    truth_locations: np.ndarray

    def to_dict(self) -> dict:
        return {
            "est_count": self.est_count,
            "est_locations": self.est_locations.tolist(),
            "error": self.error,
            "truth_count": self.truth_count,
            "truth_locations": self.truth_locations.tolist(),
        }


def localization_error(truth: np.ndarray, estimate: np.ndarray) -> float:
    """Padded sum of absolute errors between sorted location lists.

    Missing truths are padded with 0 and missing estimates with 1 before the
    index-aligned differences are summed.
    """
    t = np.asarray(truth, dtype=float).ravel()
    e = np.asarray(estimate, dtype=float).ravel()
    size = max(t.size, e.size)
    tp = np.zeros(size)
    ep = np.ones(size)
    tp[: t.size] = t
    ep[: e.size] = e
    return float(np.sum(np.abs(tp - ep)))


def region_estimates(lo: np.ndarray, hi: np.ndarray, radio_range: float) -> np.ndarray:
    """Transmitter estimates for contiguous occupied regions.

    A region of width ``w`` gets ``k = max(floor(w / 2r), 1)`` estimates at
    ``lo + (j - 1/2) w / k``; for ``w <= 2r`` that is the midpoint.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.size == 0:
        return np.empty(0)
    w = hi - lo
    ratio = w / (2.0 * radio_range)
    k = np.where(w <= 2.0 * radio_range, 1, np.maximum(np.floor(ratio * (1 + _FLOOR_SLACK)), 1)).astype(np.int64)
    region = np.repeat(np.arange(lo.size), k)
    offset = np.arange(k.sum()) - np.repeat(np.cumsum(k) - k, k)
    est = lo[region] + (offset + 0.5) * w[region] / k[region]
    return np.sort(est)


def occupied_region(deployment: Deployment, cell_width: float | None = None) -> DisjointRegionSet:
    """Occupied space: clearance union of 1-readings, or present cells when noisy."""
    b = deployment.require_readings()
    if deployment.flip_prob == 0.0:
        return DisjointRegionSet.clearance(np.sort(deployment.sensor_locations[b == 1]), deployment.radio_range)
    width = cell_width if cell_width is not None else default_cell_width(deployment.n)
    return majority_decode(deployment, width).occupied()


def localize(deployment: Deployment, cell_width: float | None = None) -> LocalizationResult:
    """Count and place transmitters from the occupied regions.

    With noisy sensors (``flip_prob > 0``) the occupied space is the union of
    cells a majority decode marks present; ``cell_width`` defaults to
    ``4 log n / n``.
    """
    occ = occupied_region(deployment, cell_width)
    est = region_estimates(occ.lo, occ.hi, deployment.radio_range)
    truth = deployment.tx_locations
    return LocalizationResult(int(est.size), est, localization_error(truth, est), int(truth.size), truth)


def five_partition_bound(n: int, c: float) -> float:
    """Per-transmitter accuracy guaranteed by the five-partition estimator."""
    return 4.0 * c * math.log(n) / n


def five_partition_localize(deployment: Deployment, c: float, d: float) -> LocalizationResult:
    """Cell-based estimator for well-separated transmitters with noiseless sensors.

    Requires ``r_s = c log n / n`` and transmitters at least ``d log n / n``
    apart with ``d > 10 c``.  ``[0, 1]`` is tiled by cells of width
    ``10 c log n / n``, each split into five parts.  A 1-reading counts as
    evidence for its cell unless it sits in the outer half of the first or
    last part (such readings can be caused by a neighbouring cell's
    transmitter).  1-readings are grouped into clusters separated by gaps
    wider than ``2 r_s``; every cluster holding evidence for some cell yields
    one transmitter at the midpoint of the cluster's span.
    """
    if not d > 10.0 * c:
        raise ValueError(f"five-partition estimator needs d > 10c (got d={d}, c={c})")
    if deployment.flip_prob != 0.0:
        raise ValueError("five-partition estimator assumes noiseless sensors")
    n = deployment.n
    if n < 2:
        raise ValueError("five-partition estimator needs n >= 2")
    unit = math.log(n) / n
    r = deployment.radio_range
    if not math.isclose(r, c * unit, rel_tol=1e-9):
        raise ValueError(f"radio range {r} != c log n / n = {c * unit}")
    truth = deployment.tx_locations
    if truth.size > 1 and np.min(np.diff(truth)) < d * unit * (1 - 1e-12):
        raise ValueError("transmitters closer than d log n / n")
    width = 10.0 * c * unit
    if width > 1.0:
        raise ValueError("cell width 10 c log n / n exceeds the segment; n too small")

    b = deployment.require_readings()
    ones = np.sort(deployment.sensor_locations[b == 1])
    if ones.size == 0:
        est = np.empty(0)
    else:
        part = width / 5.0
        cell = cell_index(ones, width)
        offset = ones - cell * width
        edge = (offset < part / 2.0) | (offset >= width - part / 2.0)
        cluster = np.concatenate([[0], np.cumsum(np.diff(ones) > 2.0 * r)])
        hits = np.unique(cluster[~edge])
        first = np.searchsorted(cluster, hits, side="left")
        last = np.searchsorted(cluster, hits, side="right") - 1
        est = np.sort(0.5 * (ones[first] + ones[last]))
    return LocalizationResult(int(est.size), est, localization_error(truth, est), int(truth.size), truth)


def void_estimate(deployment: Deployment, cell_width: float | None = None) -> DisjointRegionSet:
    """Direct reconstruction when noiseless, majority-decoded void otherwise."""
    if deployment.flip_prob == 0.0:
        return reconstruct_void(deployment)
    width = cell_width if cell_width is not None else default_cell_width(deployment.n)
    return majority_decode(deployment, width).void()

