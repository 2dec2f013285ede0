"""Seeded Monte Carlo experiments over (n, scaling law, parameter) grids.

Every grid cell is split into fixed-size blocks of trials and every block
draws from its own stream ``stream(seed, 0, n_index, law_index, param_index,
block)``.  Blocks are summed in index order, so the number of worker threads
never changes a result.
"""
from __future__ import annotations

import csv
import io
import json
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats

from . import __version__
from .density_opt import clamped_miss_probability, count_misses
from .field_model import (GENERATOR_NAME, LOG_N_OVER_N, ScalingLaw, SpatialPdf, place_transmitters,
                          sample_deployment, stream)
from .recovery import DEFAULT_CELL_C, default_cell_width, localize, void_estimate

EXPERIMENTS = ("whitespace", "localization", "miss-probability")
TX_MODES = ("uniform", "pdf", "explicit")
CSV_HEADER = ("experiment", "n", "law", "param", "trials", "success", "p_hat", "ci95", "mean_metric")
DEFAULT_TRIALS = 10_000
DEFAULT_BLOCK = 500


class ConfigError(ValueError):
    """Invalid experiment or world configuration."""


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = stats.binomtest(int(successes), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def wilson_halfwidth(successes: int, trials: int, confidence: float = 0.95) -> float:
    """Half the width of the Wilson interval (the interval is not centred on p_hat)."""
    lo, hi = wilson_interval(successes, trials, confidence)
    return 0.5 * (hi - lo)


def _as_tuple(value: Any) -> tuple:
    if isinstance(value, (list, tuple)):
        return tuple(value)
    return (value,)


def _int(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer, float)):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if isinstance(value, float) and not value.is_integer():
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a grid of ``n`` values times laws times parameters.

    ``param`` is the transmitter count ``M`` for the whitespace and
    localization experiments and the sensor density for the miss-probability
    experiment.  With ``fixed_transmitters`` the transmitters of each grid
    cell are drawn once and reused by every trial.
    """

    experiment: str
    n_grid: tuple[int, ...]
    M: tuple[int, ...] = (1,)
    p: float = 0.0
    r_s_laws: tuple[ScalingLaw, ...] = (LOG_N_OVER_N,)
    epsilon_law: ScalingLaw = LOG_N_OVER_N
    trials: int = DEFAULT_TRIALS
    seed: int = 0
    tx_mode: str = "uniform"
    tx_locations: tuple[float, ...] = ()
    fixed_transmitters: bool = False
    min_separation: ScalingLaw | None = None
    sensor_pdfs: tuple[SpatialPdf, ...] = (SpatialPdf("uniform"),)
    tx_pdf: SpatialPdf = SpatialPdf("uniform")
    cell_c: float = DEFAULT_CELL_C
    miss_method: str = "binomial"
    boundary: str = "clip"
    block_size: int = DEFAULT_BLOCK
    name: str = ""

    def __post_init__(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        ns = tuple(_int(v, "n_grid entry") for v in self.n_grid)
        if not ns:
            raise ConfigError("n_grid must be nonempty")
        if any(v < 1 for v in ns):
            raise ConfigError("n_grid entries must be >= 1")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError("n_grid must be strictly ascending")
        ms = tuple(_int(v, "M") for v in _as_tuple(self.M))
        if not ms or any(m < 0 for m in ms):
            raise ConfigError("M must be a nonempty list of counts >= 0")
        trials = _int(self.trials, "trials")
        if trials < 1:
            raise ConfigError(f"trials must be >= 1, got {trials}")
        if not 0.0 <= float(self.p) < 0.5:
            raise ConfigError(f"p must be in [0, 1/2), got {self.p}")
        if not self.r_s_laws:
            raise ConfigError("r_s_laws must be nonempty")
        if self.tx_mode not in TX_MODES:
            raise ConfigError(f"tx_mode must be one of {TX_MODES}, got {self.tx_mode!r}")
        if self.tx_mode == "explicit" and len(ms) != 1:
            raise ConfigError("explicit transmitter placement needs a single M")
        if self.tx_mode == "explicit" and len(self.tx_locations) != ms[0]:
            raise ConfigError(f"tx_locations has {len(self.tx_locations)} entries, M is {ms[0]}")
        if not self.sensor_pdfs:
            raise ConfigError("sensor_pdfs must be nonempty")
        if self.experiment != "miss-probability" and len(self.sensor_pdfs) != 1:
            raise ConfigError("whitespace and localization experiments take a single sensor pdf")
        if self.experiment == "miss-probability" and ms != (1,):
            raise ConfigError("the miss-probability experiment uses exactly one transmitter (M = 1)")
        if not (self.cell_c > 0 and math.isfinite(self.cell_c)):
            raise ConfigError("cell_c must be > 0")
        if self.miss_method not in ("direct", "binomial"):
            raise ConfigError("miss_method must be 'direct' or 'binomial'")
        if self.boundary not in ("clip", "wrap"):
            raise ConfigError("boundary must be 'clip' or 'wrap'")
        block = _int(self.block_size, "block_size")
        if block < 1:
            raise ConfigError("block_size must be >= 1")
        object.__setattr__(self, "n_grid", ns)
        object.__setattr__(self, "M", ms)
        object.__setattr__(self, "trials", trials)
        object.__setattr__(self, "block_size", block)
        object.__setattr__(self, "seed", _int(self.seed, "seed"))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "r_s_laws", tuple(self.r_s_laws))
        object.__setattr__(self, "sensor_pdfs", tuple(self.sensor_pdfs))
        object.__setattr__(self, "tx_locations", tuple(float(v) for v in self.tx_locations))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("experiment config must be a JSON object")
        known = set(cls.__dataclass_fields__) | {"sensor_pdf"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "experiment" not in data or "n_grid" not in data:
            raise ConfigError("config needs 'experiment' and 'n_grid'")
        kw = dict(data)
        try:
            if "sensor_pdf" in kw:
                if "sensor_pdfs" in kw:
                    raise ConfigError("give either sensor_pdf or sensor_pdfs, not both")
                kw["sensor_pdfs"] = [kw.pop("sensor_pdf")]
            if "sensor_pdfs" in kw:
                kw["sensor_pdfs"] = tuple(SpatialPdf.from_spec(s) for s in _as_tuple(kw["sensor_pdfs"]))
            if "tx_pdf" in kw:
                kw["tx_pdf"] = SpatialPdf.from_spec(kw["tx_pdf"])
            if "r_s_laws" in kw:
                kw["r_s_laws"] = tuple(ScalingLaw.from_spec(s) for s in _as_tuple(kw["r_s_laws"]))
            if "epsilon_law" in kw:
                kw["epsilon_law"] = ScalingLaw.from_spec(kw["epsilon_law"])
            if kw.get("min_separation") in (None, 0, 0.0):
                kw["min_separation"] = None
            else:
                kw["min_separation"] = ScalingLaw.from_spec(kw["min_separation"])
            kw["n_grid"] = _as_tuple(kw["n_grid"])
            if "tx_locations" in kw:
                kw["tx_locations"] = _as_tuple(kw["tx_locations"])
            return cls(**kw)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict[str, Any]:
        return {
            "experiment": self.experiment,
            "n_grid": list(self.n_grid),
            "M": list(self.M),
            "p": self.p,
            "r_s_laws": [law.to_spec() for law in self.r_s_laws],
            "epsilon_law": self.epsilon_law.to_spec(),
            "trials": self.trials,
            "seed": self.seed,
            "tx_mode": self.tx_mode,
            "tx_locations": list(self.tx_locations),
            "fixed_transmitters": self.fixed_transmitters,
            "min_separation": None if self.min_separation is None else self.min_separation.to_spec(),
            "sensor_pdfs": [pdf.to_spec() for pdf in self.sensor_pdfs],
            "tx_pdf": self.tx_pdf.to_spec(),
            "cell_c": self.cell_c,
            "miss_method": self.miss_method,
            "boundary": self.boundary,
            "block_size": self.block_size,
            "name": self.name,
        }

    def with_seed(self, seed: int) -> "ExperimentConfig":
        data = self.to_dict()
        data["seed"] = seed
        return ExperimentConfig.from_dict(data)

    def params(self) -> list[tuple[str, Any]]:
        """``(label, value)`` pairs for the ``param`` axis."""
        if self.experiment == "miss-probability":
            return [(pdf.name, pdf) for pdf in self.sensor_pdfs]
        suffix = f";p={self.p:g}" if self.p > 0 else ""
        return [(f"M={m}{suffix}", m) for m in self.M]


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    n: int
    law: str
    param: str
    trials: int
    success: int
    p_hat: float
    ci95: float
    mean_metric: float
    wall_time: float = 0.0

    def csv_fields(self) -> list[str]:
        return [self.experiment, str(self.n), self.law, self.param, str(self.trials), str(self.success),
                f"{self.p_hat:.12g}", f"{self.ci95:.12g}", f"{self.mean_metric:.12g}"]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[ResultRow]
    wall_time: float = 0.0
    notes: dict[str, Any] = field(default_factory=dict)

    def row(self, n: int, law: str | None = None, param: str | None = None) -> ResultRow:
        for r in self.rows:
            if r.n == n and (law is None or r.law == law) and (param is None or r.param == param):
                return r
        raise KeyError((n, law, param))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow(r.csv_fields())
        return buf.getvalue()

    def metadata(self) -> dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "generator": GENERATOR_NAME,
            "version": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "notes": self.notes,
            "wall_time": self.wall_time,
            "row_wall_times": [r.wall_time for r in self.rows],
        }

    def write(self, csv_path: str, meta_path: str | None = None) -> None:
        with open(csv_path, "w", newline="") as fh:
            fh.write(self.to_csv())
        with open(meta_path or sidecar_path(csv_path), "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def sidecar_path(csv_path: str) -> str:
    return csv_path + ".meta.json"


# ---------------------------------------------------------------------------
# per-block trial loops


@dataclass(frozen=True)
class _Cell:
    key: tuple[int, int, int]
    n: int
    law: ScalingLaw
    label: str
    param: Any


def _fixed_tx(config: ExperimentConfig, cell: _Cell) -> np.ndarray | None:
    if config.tx_mode == "explicit":
        return np.asarray(config.tx_locations)
    if not config.fixed_transmitters:
        return None
    sep = config.min_separation(cell.n) if config.min_separation else 0.0
    return place_transmitters(cell.param, sep, config.tx_mode, stream(config.seed, 1, *cell.key), pdf=config.tx_pdf)


def _world_trials(config: ExperimentConfig, cell: _Cell, rng: np.random.Generator, count: int,
                  fixed: np.ndarray | None, score: Callable) -> tuple[int, float]:
    n, M = cell.n, cell.param
    r = cell.law(n)
    eps = config.epsilon_law(n)
    sep = config.min_separation(n) if config.min_separation else 0.0
    width = default_cell_width(n, config.cell_c) if config.p > 0 else None
    mode, locs = ("explicit", fixed) if fixed is not None else (config.tx_mode, None)
    wins, total = 0, 0.0
    for _ in range(count):
        world = sample_deployment(n, M, r, rng, flip_prob=config.p, sensor_pdf=config.sensor_pdfs[0],
                                  tx_mode=mode, tx_locations=locs, tx_pdf=config.tx_pdf, min_separation=sep)
        ok, metric = score(world, eps, width)
        wins += ok
        total += metric
    return wins, total


def _whitespace_score(world, eps: float, width: float | None) -> tuple[bool, float]:
    loss = 1.0 - void_estimate(world, width).measure()
    return loss <= eps, loss


def _localization_score(world, eps: float, width: float | None) -> tuple[bool, float]:
    err = localize(world, width).error
    return err < eps, err


def _block(config: ExperimentConfig, cell: _Cell, fixed: np.ndarray | None, b: int, count: int) -> tuple[int, float]:
    rng = stream(config.seed, 0, *cell.key, b)
    if config.experiment == "miss-probability":
        misses = count_misses(config.tx_pdf, cell.param, cell.n, cell.law(cell.n), count, rng,
                              config.miss_method, config.boundary)
        return misses, 0.0
    score = _whitespace_score if config.experiment == "whitespace" else _localization_score
    return _world_trials(config, cell, rng, count, fixed, score)


def _cells(config: ExperimentConfig) -> list[_Cell]:
    return [
        _Cell((i, j, k), n, law, label, value)
        for i, n in enumerate(config.n_grid)
        for j, law in enumerate(config.r_s_laws)
        for k, (label, value) in enumerate(config.params())
    ]


def run_experiment(config: ExperimentConfig, threads: int = 1,
                   progress: Callable[[str], None] | None = None) -> ExperimentResult:
    """Run every grid cell of ``config``; ``threads`` only affects speed."""
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    start = time.perf_counter()
    cells = _cells(config)
    blocks = [(b, min(config.block_size, config.trials - b * config.block_size))
              for b in range(math.ceil(config.trials / config.block_size))]
    rows: list[ResultRow] = []
    notes: dict[str, Any] = {}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for cell in cells:
            t0 = time.perf_counter()
            if config.experiment != "miss-probability" and cell.law(cell.n) <= 0:
                raise ConfigError(f"r_s law {cell.law.id} gives r_s <= 0 at n = {cell.n}")
            fixed = _fixed_tx(config, cell)
            parts = list(pool.map(lambda bc: _block(config, cell, fixed, *bc), blocks))
            wins = sum(w for w, _ in parts)
            metric_sum = math.fsum(m for _, m in parts)
            if config.experiment == "miss-probability":
                metric, clamped = clamped_miss_probability(config.tx_pdf, cell.param, cell.n, cell.law(cell.n))
                if clamped:
                    notes.setdefault("clamped_reference", []).append([cell.n, cell.law.id, cell.label])
            else:
                metric = metric_sum / config.trials
            row = ResultRow(config.experiment, cell.n, cell.law.id, cell.label, config.trials, wins,
                            wins / config.trials, wilson_halfwidth(wins, config.trials), float(metric),
                            time.perf_counter() - t0)
            rows.append(row)
            if progress:
                progress(f"{row.experiment} n={row.n} law={row.law} {row.param}: "
                         f"p_hat={row.p_hat:.4g} +/- {row.ci95:.2g} ({row.wall_time:.1f}s)")
    if config.experiment == "miss-probability":
        notes["mean_metric"] = "model miss probability by quadrature (base clamped to [0, 1])"
    else:
        notes["mean_metric"] = "mean recovery loss" if config.experiment == "whitespace" else "mean localization error"
    return ExperimentResult(config, rows, time.perf_counter() - start, notes)


def run_whitespace_experiment(config: ExperimentConfig, threads: int = 1, progress=None) -> ExperimentResult:
    """Success iff the recovery loss ``1 - |A_void|`` is at most ``eps(n)``."""
    if config.experiment != "whitespace":
        raise ConfigError("expected a whitespace experiment")
    return run_experiment(config, threads, progress)


def run_localization_experiment(config: ExperimentConfig, threads: int = 1, progress=None) -> ExperimentResult:
    """Success iff the padded localization error is below ``eps(n)``."""
    if config.experiment != "localization":
        raise ConfigError("expected a localization experiment")
    return run_experiment(config, threads, progress)


def run_miss_experiment(config: ExperimentConfig, threads: int = 1, progress=None) -> ExperimentResult:
    """``success`` counts misses, so ``p_hat`` is the empirical miss probability."""
    if config.experiment != "miss-probability":
        raise ConfigError("expected a miss-probability experiment")
    return run_experiment(config, threads, progress)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def laws(ids: Sequence[str]) -> tuple[ScalingLaw, ...]:
    return tuple(ScalingLaw.from_spec(i) for i in ids)
