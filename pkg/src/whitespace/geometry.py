"""Interval algebra on the unit segment [0, 1].

A :class:`DisjointRegionSet` is a canonical union of closed subintervals of
[0, 1]: sorted, pairwise separated by a gap containing at least one double,
and free of zero-length pieces.  Endpoints are kept as the exact doubles supplied by the
caller; nothing is rounded.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        lo, hi = float(self.lo), float(self.hi)
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError(f"invalid interval [{lo}, {hi}]: need 0 <= lo <= hi <= 1")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def __contains__(self, x: float) -> bool:
        return self.lo <= x <= self.hi


def make_clipped_interval(center: float, radius: float) -> Interval:
    """Closed ball of ``radius`` around ``center``, clipped to [0, 1]."""
    if not 0.0 <= center <= 1.0:
        raise ValueError(f"center {center} outside [0, 1]")
    if radius < 0 or not np.isfinite(radius):
        raise ValueError(f"radius must be a finite non-negative number, got {radius}")
    return Interval(max(center - radius, 0.0), min(center + radius, 1.0))


def clipped_bounds(centers: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`make_clipped_interval`; returns ``(lo, hi)`` arrays."""
    centers = np.asarray(centers, dtype=float)
    return np.maximum(centers - radius, 0.0), np.minimum(centers + radius, 1.0)


def merge_intervals(lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Canonicalise a bag of closed intervals.

    Overlapping and touching intervals are merged (including ends one ulp
    apart, which leave no double uncovered), zero-length ones dropped.
    Input order does not matter.
    """
    lo = np.asarray(lo, dtype=float).ravel()
    hi = np.asarray(hi, dtype=float).ravel()
    if lo.shape != hi.shape:
        raise ValueError("lo and hi must have the same length")
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]
    if lo.size == 0:
        return np.empty(0), np.empty(0)
    if np.any(lo[1:] < lo[:-1]):
        order = np.argsort(lo, kind="stable")
        lo, hi = lo[order], hi[order]
    reach = np.maximum.accumulate(hi)
    starts = np.empty(lo.size, dtype=bool)
    starts[0] = True
    # Intervals whose ends are adjacent doubles share every representable
    # point between them, so they are merged like touching intervals.
    starts[1:] = lo[1:] > np.nextafter(reach[:-1], np.inf)
    first = np.flatnonzero(starts)
    return lo[first], np.maximum.reduceat(hi, first)


def union_measure(lo: np.ndarray, hi: np.ndarray) -> float:
    """Total length of the union of the given intervals."""
    mlo, mhi = merge_intervals(lo, hi)
    return float(np.sum(mhi - mlo))


class DisjointRegionSet:
    """Finite union of disjoint closed intervals inside [0, 1].

    Instances are immutable; all set operations return new canonical sets.
    """

    __slots__ = ("_lo", "_hi")

    def __init__(self, intervals: Iterable[Interval | tuple[float, float]] = ()) -> None:
        pairs = [iv if isinstance(iv, Interval) else Interval(*iv) for iv in intervals]
        lo = np.array([iv.lo for iv in pairs], dtype=float)
        hi = np.array([iv.hi for iv in pairs], dtype=float)
        self._set_arrays(*merge_intervals(lo, hi))

    def _set_arrays(self, lo: np.ndarray, hi: np.ndarray) -> None:
        lo = np.ascontiguousarray(lo, dtype=float)
        hi = np.ascontiguousarray(hi, dtype=float)
        lo.setflags(write=False)
        hi.setflags(write=False)
        self._lo, self._hi = lo, hi

    @classmethod
    def from_arrays(cls, lo: np.ndarray, hi: np.ndarray) -> "DisjointRegionSet":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.size and (lo.min() < 0.0 or hi.max() > 1.0 or np.any(lo > hi)):
            raise ValueError("intervals must satisfy 0 <= lo <= hi <= 1")
        out = cls.__new__(cls)
        out._set_arrays(*merge_intervals(lo, hi))
        return out

    @classmethod
    def _canonical(cls, lo: np.ndarray, hi: np.ndarray) -> "DisjointRegionSet":
        out = cls.__new__(cls)
        out._set_arrays(lo, hi)
        return out

    @classmethod
    def empty(cls) -> "DisjointRegionSet":
        return cls._canonical(np.empty(0), np.empty(0))

    @classmethod
    def full(cls) -> "DisjointRegionSet":
        return cls._canonical(np.array([0.0]), np.array([1.0]))

    @classmethod
    def clearance(cls, centers: np.ndarray, radius: float) -> "DisjointRegionSet":
        """Union of the clipped balls of ``radius`` around each center."""
        return cls.from_arrays(*clipped_bounds(centers, radius))

    @property
    def lo(self) -> np.ndarray:
        return self._lo

    @property
    def hi(self) -> np.ndarray:
        return self._hi

    @property
    def intervals(self) -> tuple[Interval, ...]:
        return tuple(Interval(a, b) for a, b in zip(self._lo.tolist(), self._hi.tolist()))

    def __iter__(self) -> Iterator[Interval]:
        return iter(self.intervals)

    def __len__(self) -> int:
        return int(self._lo.size)

    def __bool__(self) -> bool:
        return self._lo.size > 0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DisjointRegionSet):
            return NotImplemented
        return np.array_equal(self._lo, other._lo) and np.array_equal(self._hi, other._hi)

    def __hash__(self) -> int:
        return hash((self._lo.tobytes(), self._hi.tobytes()))

    def __repr__(self) -> str:
        body = ", ".join(f"[{a!r}, {b!r}]" for a, b in zip(self._lo.tolist(), self._hi.tolist()))
        return f"DisjointRegionSet({{{body}}})"

    def to_list(self) -> list[list[float]]:
        return [[a, b] for a, b in zip(self._lo.tolist(), self._hi.tolist())]

    def measure(self) -> float:
        return float(np.sum(self._hi - self._lo))

    def union(self, other: "DisjointRegionSet") -> "DisjointRegionSet":
        return DisjointRegionSet._canonical(
            *merge_intervals(np.concatenate([self._lo, other._lo]), np.concatenate([self._hi, other._hi]))
        )

    __or__ = union

    def complement(self) -> "DisjointRegionSet":
        """Closure of ``[0, 1]`` minus this set."""
        lo = np.concatenate([[0.0], self._hi])
        hi = np.concatenate([self._lo, [1.0]])
        keep = hi > lo
        return DisjointRegionSet._canonical(lo[keep], hi[keep])

    def intersection(self, other: "DisjointRegionSet") -> "DisjointRegionSet":
        out_lo: list[float] = []
        out_hi: list[float] = []
        a_lo, a_hi = self._lo.tolist(), self._hi.tolist()
        b_lo, b_hi = other._lo.tolist(), other._hi.tolist()
        i = j = 0
        while i < len(a_lo) and j < len(b_lo):
            lo = max(a_lo[i], b_lo[j])
            hi = min(a_hi[i], b_hi[j])
            if hi > lo:
                out_lo.append(lo)
                out_hi.append(hi)
            if a_hi[i] < b_hi[j]:
                i += 1
            else:
                j += 1
        return DisjointRegionSet._canonical(np.array(out_lo), np.array(out_hi))

    __and__ = intersection

    def contains(self, x: float | np.ndarray) -> bool | np.ndarray:
        """Point membership (closed intervals)."""
        xs = np.asarray(x, dtype=float)
        idx = np.searchsorted(self._lo, xs, side="right") - 1
        ok = idx >= 0
        safe = np.where(ok, idx, 0)
        inside = ok & (xs <= (self._hi[safe] if self._hi.size else np.zeros_like(xs)))
        return bool(inside) if inside.ndim == 0 else inside

    def __contains__(self, x: float) -> bool:
        return bool(self.contains(x))


def union(a: DisjointRegionSet, b: DisjointRegionSet) -> DisjointRegionSet:
    return a.union(b)


def complement(a: DisjointRegionSet) -> DisjointRegionSet:
    return a.complement()


def measure(a: DisjointRegionSet) -> float:
    return a.measure()
