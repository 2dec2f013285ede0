"""World sampling: transmitter placement, sensor deployment and binary readings.

All randomness flows through explicit :class:`numpy.random.Generator` objects.
Use :func:`stream` to obtain a generator for a given seed and stream key; the
harness assigns one key per block of trials so results never depend on how
work is scheduled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import special

from .geometry import clipped_bounds

GENERATOR_NAME = "numpy.random.PCG64 (SeedSequence(seed, spawn_key=stream key))"

PDF_NORMALIZATION_TOL = 1e-6


def stream(seed: int, *key: int) -> np.random.Generator:
    """Deterministic, independent generator for ``(seed, key)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------------------
# Spatial densities on [0, 1]


@dataclass(frozen=True)
class SpatialPdf:
    """A probability density on [0, 1].

    ``kind`` is one of ``uniform``, ``triangular`` (peak at 1/2),
    ``truncated_gaussian`` (``mean``, ``stddev``, truncated to [0, 1]) or
    ``tabulated`` (``values`` on a uniform grid over [0, 1], linearly
    interpolated).
    """

    kind: str
    mean: float = 0.5
    stddev: float = 0.25
    values: tuple[float, ...] = field(default=(), repr=False)

    KINDS = ("uniform", "triangular", "truncated_gaussian", "tabulated")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown pdf kind {self.kind!r}; expected one of {self.KINDS}")
        if self.kind == "truncated_gaussian":
            if not (self.stddev > 0 and math.isfinite(self.stddev) and math.isfinite(self.mean)):
                raise ValueError("truncated_gaussian needs a finite mean and stddev > 0")
        if self.kind == "tabulated":
            v = np.asarray(self.values, dtype=float)
            if v.ndim != 1 or v.size < 2:
                raise ValueError("tabulated pdf needs at least two grid values")
            if not np.all(np.isfinite(v)):
                raise ValueError("tabulated pdf has non-finite values")
            if np.any(v < 0):
                raise ValueError("tabulated pdf has negative values")
            total = _trapezoid(v, 1.0 / (v.size - 1))
            if abs(total - 1.0) > PDF_NORMALIZATION_TOL:
                raise ValueError(f"tabulated pdf integrates to {total!r}, not 1")
            object.__setattr__(self, "values", tuple(float(x) for x in v))

    # constructors -----------------------------------------------------
    @classmethod
    def uniform(cls) -> "SpatialPdf":
        return cls("uniform")

    @classmethod
    def triangular(cls) -> "SpatialPdf":
        return cls("triangular")

    @classmethod
    def truncated_gaussian(cls, mean: float = 0.5, stddev: float = 0.25) -> "SpatialPdf":
        return cls("truncated_gaussian", mean=float(mean), stddev=float(stddev))

    @classmethod
    def tabulated(cls, values: Sequence[float] | np.ndarray) -> "SpatialPdf":
        return cls("tabulated", values=tuple(np.asarray(values, dtype=float).tolist()))

    @classmethod
    def from_spec(cls, spec: Any) -> "SpatialPdf":
        """Build from a config value: a kind name or a dict with parameters."""
        if isinstance(spec, SpatialPdf):
            return spec
        if isinstance(spec, str):
            return cls(spec)
        if isinstance(spec, dict):
            kind = spec.get("kind")
            if kind == "truncated_gaussian":
                return cls.truncated_gaussian(spec.get("mean", 0.5), spec.get("stddev", 0.25))
            if kind == "tabulated":
                if "values" not in spec:
                    raise ValueError("tabulated pdf needs 'values'")
                return cls.tabulated(spec["values"])
            return cls(kind)
        raise ValueError(f"cannot interpret pdf spec {spec!r}")

    def to_spec(self) -> dict[str, Any]:
        if self.kind == "truncated_gaussian":
            return {"kind": self.kind, "mean": self.mean, "stddev": self.stddev}
        if self.kind == "tabulated":
            return {"kind": self.kind, "values": list(self.values)}
        return {"kind": self.kind}

    @property
    def name(self) -> str:
        if self.kind == "truncated_gaussian":
            return f"truncated_gaussian({self.mean:g},{self.stddev:g})"
        if self.kind == "tabulated":
            return f"tabulated[{len(self.values)}]"
        return self.kind

    # evaluation -------------------------------------------------------
    def _tg_consts(self) -> tuple[float, float]:
        a = special.ndtr((0.0 - self.mean) / self.stddev)
        b = special.ndtr((1.0 - self.mean) / self.stddev)
        return float(a), float(b - a)

    def pdf(self, x: np.ndarray | float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = (x >= 0.0) & (x <= 1.0)
        if self.kind == "uniform":
            out = np.ones_like(x)
        elif self.kind == "triangular":
            out = np.where(x < 0.5, 4.0 * x, 4.0 * (1.0 - x))
        elif self.kind == "truncated_gaussian":
            _, mass = self._tg_consts()
            z = (x - self.mean) / self.stddev
            out = np.exp(-0.5 * z * z) / (math.sqrt(2.0 * math.pi) * self.stddev * mass)
        else:
            v = np.asarray(self.values)
            out = np.interp(x, np.linspace(0.0, 1.0, v.size), v)
        return np.where(inside, out, 0.0)

    def pdf_scalar(self, x: float) -> float:
        """Scalar :meth:`pdf` without array overhead (used inside quadrature)."""
        if not 0.0 <= x <= 1.0:
            return 0.0
        if self.kind == "uniform":
            return 1.0
        if self.kind == "triangular":
            return 4.0 * x if x < 0.5 else 4.0 * (1.0 - x)
        if self.kind == "truncated_gaussian":
            _, mass = self._tg_consts()
            z = (x - self.mean) / self.stddev
            return math.exp(-0.5 * z * z) / (math.sqrt(2.0 * math.pi) * self.stddev * mass)
        return float(self.pdf(x))

    def cdf(self, x: np.ndarray | float) -> np.ndarray:
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        if self.kind == "uniform":
            return x
        if self.kind == "triangular":
            return np.where(x < 0.5, 2.0 * x * x, 1.0 - 2.0 * (1.0 - x) ** 2)
        if self.kind == "truncated_gaussian":
            lo, mass = self._tg_consts()
            return np.clip((special.ndtr((x - self.mean) / self.stddev) - lo) / mass, 0.0, 1.0)
        grid, v, cum = self._table()
        h = grid[1] - grid[0]
        j = np.clip(np.floor(x / h).astype(np.int64), 0, v.size - 2)
        t = x - grid[j]
        val = cum[j] + v[j] * t + (v[j + 1] - v[j]) * t * t / (2.0 * h)
        return np.clip(val / cum[-1], 0.0, 1.0)

    def ppf(self, u: np.ndarray | float) -> np.ndarray:
        """Inverse CDF; maps uniform draws on [0, 1) to samples."""
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform":
            return u.copy()
        if self.kind == "triangular":
            return np.where(u < 0.5, np.sqrt(u / 2.0), 1.0 - np.sqrt((1.0 - u) / 2.0))
        if self.kind == "truncated_gaussian":
            lo, mass = self._tg_consts()
            p = np.clip(lo + u * mass, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
            return np.clip(self.mean + self.stddev * special.ndtri(p), 0.0, 1.0)
        grid, v, cum = self._table()
        h = grid[1] - grid[0]
        target = u * cum[-1]
        j = np.clip(np.searchsorted(cum, target, side="left") - 1, 0, v.size - 2)
        c = target - cum[j]
        a = (v[j + 1] - v[j]) / (2.0 * h)
        b = v[j]
        disc = np.sqrt(np.maximum(b * b + 4.0 * a * c, 0.0))
        denom = b + disc
        t = np.where(denom > 0, 2.0 * c / np.where(denom > 0, denom, 1.0), 0.0)
        return np.clip(grid[j] + np.clip(t, 0.0, h), 0.0, 1.0)

    def max_value(self) -> float:
        if self.kind == "uniform":
            return 1.0
        if self.kind == "triangular":
            return 2.0
        if self.kind == "truncated_gaussian":
            x = min(max(self.mean, 0.0), 1.0)
            return float(self.pdf(x))
        return float(max(self.values))

    def mean_value(self) -> float:
        """Mean of the distribution (numerical for the non-trivial kinds)."""
        if self.kind in ("uniform", "triangular"):
            return 0.5
        x = np.linspace(0.0, 1.0, 200001)
        return _trapezoid(x * self.pdf(x), x[1] - x[0])

    def _table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        v = np.asarray(self.values)
        grid = np.linspace(0.0, 1.0, v.size)
        h = grid[1] - grid[0]
        cum = np.concatenate([[0.0], np.cumsum(0.5 * h * (v[1:] + v[:-1]))])
        return grid, v, cum


def _trapezoid(y: np.ndarray, h: float) -> float:
    y = np.asarray(y, dtype=float)
    return float(h * (y.sum() - 0.5 * (y[0] + y[-1])))


# ---------------------------------------------------------------------------
# Scaling laws


@dataclass(frozen=True)
class ScalingLaw:
    """``coefficient * g(n)`` for a fixed shape ``g`` (natural logarithms)."""

    kind: str
    coefficient: float = 1.0

    KINDS = ("log_n_over_n", "log_n_over_n_squared", "sqrt_log_n_over_n", "constant")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown scaling law {self.kind!r}; expected one of {self.KINDS}")
        if not (self.coefficient > 0 and math.isfinite(self.coefficient)):
            raise ValueError("scaling-law coefficient must be finite and > 0")

    def evaluate(self, n: float) -> float:
        if self.kind == "constant":
            return float(self.coefficient)
        base = math.log(n) / n
        if self.kind == "log_n_over_n_squared":
            base = base * base
        elif self.kind == "sqrt_log_n_over_n":
            base = math.sqrt(base)
        return self.coefficient * base

    __call__ = evaluate

    @property
    def id(self) -> str:
        if self.kind == "constant":
            return f"constant({self.coefficient:g})"
        return self.kind if self.coefficient == 1.0 else f"{self.coefficient:g}*{self.kind}"

    @classmethod
    def from_spec(cls, spec: Any) -> "ScalingLaw":
        if isinstance(spec, ScalingLaw):
            return spec
        if isinstance(spec, bool):
            raise ValueError(f"cannot interpret scaling law {spec!r}")
        if isinstance(spec, (int, float)):
            return cls("constant", float(spec))
        if isinstance(spec, str):
            return cls(spec)
        if isinstance(spec, dict):
            return cls(spec["kind"], float(spec.get("coefficient", 1.0)))
        raise ValueError(f"cannot interpret scaling law {spec!r}")

    def to_spec(self) -> dict[str, Any]:
        return {"kind": self.kind, "coefficient": self.coefficient}


LOG_N_OVER_N = ScalingLaw("log_n_over_n")


# ---------------------------------------------------------------------------
# Worlds


@dataclass(frozen=True, eq=False)
class Deployment:
    """One sampled world.

    ``readings`` is ``None`` until :func:`generate_readings` has been applied
    (see :meth:`with_readings`).  ``seed`` is an opaque record of where the
    randomness came from.
    """

    tx_locations: np.ndarray
    sensor_locations: np.ndarray
    radio_range: float
    flip_prob: float = 0.0
    readings: np.ndarray | None = None
    seed: Any = None

    def __post_init__(self) -> None:
        tx = np.sort(np.asarray(self.tx_locations, dtype=float).ravel())
        sensors = np.asarray(self.sensor_locations, dtype=float).ravel()
        for name, arr in (("transmitter", tx), ("sensor", sensors)):
            if arr.size and (not np.all(np.isfinite(arr)) or arr.min() < 0 or arr.max() > 1):
                raise ValueError(f"{name} locations must lie in [0, 1]")
        if not (self.radio_range > 0 and math.isfinite(self.radio_range)):
            raise ValueError(f"radio range must be > 0, got {self.radio_range}")
        if not 0.0 <= self.flip_prob < 0.5:
            raise ValueError(f"flip probability must be in [0, 1/2), got {self.flip_prob}")
        object.__setattr__(self, "tx_locations", tx)
        object.__setattr__(self, "sensor_locations", sensors)
        object.__setattr__(self, "radio_range", float(self.radio_range))
        object.__setattr__(self, "flip_prob", float(self.flip_prob))
        if self.readings is not None:
            b = np.asarray(self.readings)
            if b.shape != sensors.shape:
                raise ValueError("need exactly one reading per sensor")
            if not np.all((b == 0) | (b == 1)):
                raise ValueError("readings must be 0/1")
            object.__setattr__(self, "readings", b.astype(np.uint8))
        for arr in (self.tx_locations, self.sensor_locations, self.readings):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n(self) -> int:
        return int(self.sensor_locations.size)

    @property
    def M(self) -> int:
        return int(self.tx_locations.size)

    def clean_readings(self) -> np.ndarray:
        return proximity_readings(self.sensor_locations, self.tx_locations, self.radio_range)

    def with_readings(self, readings: np.ndarray) -> "Deployment":
        return Deployment(self.tx_locations, self.sensor_locations, self.radio_range,
                          self.flip_prob, readings, self.seed)

    def require_readings(self) -> np.ndarray:
        if self.readings is None:
            raise ValueError("deployment has no readings yet")
        return self.readings


def proximity_readings(sensors: np.ndarray, tx_sorted: np.ndarray, radius: float) -> np.ndarray:
    """Noise-free readings: 1 iff a transmitter lies in the sensor's clipped range.

    Uses the same clipped interval that void reconstruction uses, so a sensor
    reading 0 can never have a transmitter inside its clearance interval.
    """
    sensors = np.asarray(sensors, dtype=float)
    tx_sorted = np.asarray(tx_sorted, dtype=float)
    if tx_sorted.size == 0:
        return np.zeros(sensors.shape, dtype=np.uint8)
    lo, hi = clipped_bounds(sensors, radius)
    idx = np.searchsorted(tx_sorted, lo, side="left")
    hit = idx < tx_sorted.size
    hit[hit] = tx_sorted[idx[hit]] <= hi[hit]
    return hit.astype(np.uint8)


def sample_sensors(n: int, pdf: SpatialPdf, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. sensor positions drawn by inverse CDF."""
    if n < 0:
        raise ValueError("sensor count must be >= 0")
    return pdf.ppf(rng.random(int(n)))


def generate_readings(deployment: Deployment, rng: np.random.Generator) -> np.ndarray:
    """Proximity indicator XOR independent Bernoulli(flip_prob) errors."""
    clean = deployment.clean_readings()
    if deployment.flip_prob == 0.0:
        return clean
    flips = rng.random(clean.size) < deployment.flip_prob
    return clean ^ flips.astype(np.uint8)


def place_transmitters(
    M: int,
    min_separation: float = 0.0,
    mode: str = "uniform",
    rng: np.random.Generator | None = None,
    *,
    locations: Sequence[float] | None = None,
    pdf: SpatialPdf | None = None,
    max_tries: int = 100_000,
) -> np.ndarray:
    """Sorted transmitter locations with pairwise gaps >= ``min_separation``.

    ``mode`` is ``uniform`` (rejection sampling over sorted uniform draws),
    ``pdf`` (same, drawing from ``pdf``) or ``explicit`` (``locations`` is
    validated and returned sorted).
    """
    if M < 0:
        raise ValueError("transmitter count must be >= 0")
    if min_separation < 0:
        raise ValueError("minimum separation must be >= 0")
    if M > 1 and (M - 1) * min_separation >= 1.0:
        raise ValueError(f"cannot place {M} transmitters {min_separation} apart in [0, 1]")
    if mode == "explicit":
        if locations is None:
            raise ValueError("explicit placement needs locations")
        x = np.sort(np.asarray(locations, dtype=float).ravel())
        if x.size != M:
            raise ValueError(f"expected {M} explicit locations, got {x.size}")
        if x.size and (x.min() < 0 or x.max() > 1):
            raise ValueError("transmitter locations must lie in [0, 1]")
        if x.size > 1 and np.min(np.diff(x)) < min_separation:
            raise ValueError("explicit locations violate the minimum separation")
        return x
    if mode not in ("uniform", "pdf"):
        raise ValueError(f"unknown placement mode {mode!r}")
    if rng is None:
        raise ValueError("random placement needs an rng")
    if M == 0:
        return np.empty(0)
    draw_pdf = pdf if mode == "pdf" else SpatialPdf.uniform()
    if draw_pdf is None:
        raise ValueError("pdf placement needs a pdf")
    for _ in range(max_tries):
        x = np.sort(draw_pdf.ppf(rng.random(M)))
        if M == 1 or np.min(np.diff(x)) >= min_separation:
            return x
    raise RuntimeError(f"rejection sampling failed after {max_tries} tries")


def sample_deployment(
    n: int,
    M: int,
    radio_range: float,
    rng: np.random.Generator,
    *,
    flip_prob: float = 0.0,
    sensor_pdf: SpatialPdf | None = None,
    tx_mode: str = "uniform",
    tx_locations: Sequence[float] | None = None,
    tx_pdf: SpatialPdf | None = None,
    min_separation: float = 0.0,
    seed: Any = None,
) -> Deployment:
    """Transmitters, then sensors, then readings, all from ``rng`` in that order."""
    tx = place_transmitters(M, min_separation, tx_mode, rng, locations=tx_locations, pdf=tx_pdf)
    sensors = sample_sensors(n, sensor_pdf or SpatialPdf.uniform(), rng)
    world = Deployment(tx, sensors, radio_range, flip_prob, seed=seed)
    return world.with_readings(generate_readings(world, rng))
