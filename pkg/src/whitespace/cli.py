"""Command-line front end.

Subcommands: ``recover``, ``localize``, ``density``, ``experiment`` and
``selftest``.  Every subcommand except ``selftest`` reads a JSON config given
by ``--config``.  Results go to ``--output`` (stdout if omitted); progress and
errors go to stderr.  Exit codes: 0 success, 1 runtime failure, 2 invalid
config.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from typing import Any

import numpy as np

from . import __version__
from .density_opt import DegenerateDensityError, miss_probability, optimal_density
from .field_model import Deployment, ScalingLaw, SpatialPdf, generate_readings, sample_deployment, stream
from .harness import ConfigError, ExperimentConfig, run_experiment, sidecar_path
from .recovery import (DEFAULT_CELL_C, default_cell_width, five_partition_localize, localize, majority_decode,
                       reconstruct_void)

log = logging.getLogger("whitespace")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


# ---------------------------------------------------------------------------
# config helpers


def read_config(path: str | None) -> dict[str, Any]:
    if not path:
        raise ConfigError("--config is required")
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _number(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    return float(value)


_WORLD_KEYS = {"sensors", "transmitters", "readings", "r_s", "p", "n", "M", "sensor_pdf", "tx_mode",
               "tx_pdf", "min_separation"}


def build_world(data: dict[str, Any], seed: int | None) -> Deployment:
    """A single deployment from the ``world`` section of a config.

    Explicit worlds list ``sensors`` (and optionally ``transmitters`` and
    ``readings``); sampled worlds give ``n`` and ``M``.  ``r_s`` and
    ``min_separation`` may be numbers or scaling-law specs evaluated at n.
    Missing readings are generated from the seeded stream.
    """
    world = data.get("world")
    if not isinstance(world, dict):
        raise ConfigError("config needs a 'world' object")
    _check_keys(world, _WORLD_KEYS, "world")
    seed = int(data.get("seed", 0) if seed is None else seed)
    rng = stream(seed, 2)
    p = _number(world.get("p", 0.0), "p")
    try:
        if "sensors" in world:
            if "n" in world:
                raise ConfigError("give either explicit 'sensors' or a sampled 'n', not both")
            sensors = np.asarray(world["sensors"], dtype=float)
            n = sensors.size
            r = _radius(world, n)
            tx = np.asarray(world.get("transmitters", []), dtype=float)
            dep = Deployment(tx, sensors, r, p, seed=seed)
            if "readings" in world:
                return dep.with_readings(np.asarray(world["readings"]))
            return dep.with_readings(generate_readings(dep, rng))
        if "n" not in world:
            raise ConfigError("world needs 'sensors' or 'n'")
        n = int(world["n"])
        r = _radius(world, n)
        sep = _radius({"r_s": world.get("min_separation") or 0.0}, n)
        tx_pdf = SpatialPdf.from_spec(world["tx_pdf"]) if "tx_pdf" in world else None
        tx_mode = world.get("tx_mode", "pdf" if tx_pdf is not None else "uniform")
        M = world.get("M", 0)
        if "transmitters" in world:
            if "M" in world and M != len(world["transmitters"]):
                raise ConfigError("'M' disagrees with the number of listed transmitters")
            tx_mode, M = "explicit", len(world["transmitters"])
        return sample_deployment(n, int(M), r, rng, flip_prob=p,
                                 sensor_pdf=SpatialPdf.from_spec(world.get("sensor_pdf", "uniform")),
                                 tx_mode=tx_mode, tx_locations=world.get("transmitters"), tx_pdf=tx_pdf,
                                 min_separation=sep, seed=seed)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid world: {exc}") from exc


def _radius(world: dict, n: int) -> float:
    if "r_s" not in world:
        raise ConfigError("world needs 'r_s'")
    spec = world["r_s"]
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return float(spec)
    return ScalingLaw.from_spec(spec)(n)


def _cell_width(data: dict, n: int) -> float:
    if "cell_width" in data:
        return _number(data["cell_width"], "cell_width")
    return default_cell_width(n, _number(data.get("cell_c", DEFAULT_CELL_C), "cell_c"))


# ---------------------------------------------------------------------------
# output


def _write_atomic(path: str | None, text: str) -> None:
    """Write ``text`` to ``path`` (or stdout) so readers never see partial files."""
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_text(obj: Any) -> str:
    return json.dumps(obj, indent=2) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def cmd_recover(args: argparse.Namespace) -> int:
    data = read_config(args.config)
    _check_keys(data, {"world", "seed", "cell_c", "cell_width"}, "config")
    world = build_world(data, args.seed)
    if world.flip_prob > 0:
        width = _cell_width(data, world.n)
        grid = majority_decode(world, width)
        void = grid.void()
        extra = {"cell_width": width, "present_cells": int(grid.present.sum()), "cells": grid.n_cells}
    else:
        void = reconstruct_void(world)
        extra = {}
    measure = void.measure()
    out = {"void": void.to_list(), "measure": measure, "loss": 1.0 - measure, **extra}
    _write_atomic(args.output, _json_text(out))
    return EXIT_OK


def cmd_localize(args: argparse.Namespace) -> int:
    data = read_config(args.config)
    _check_keys(data, {"world", "seed", "cell_c", "cell_width", "method", "c", "d"}, "config")
    method = data.get("method", "regions")
    if method not in ("regions", "five_partition"):
        raise ConfigError("method must be 'regions' or 'five_partition'")
    world = build_world(data, args.seed)
    if method == "five_partition":
        if "c" not in data or "d" not in data:
            raise ConfigError("five_partition needs 'c' and 'd'")
        try:
            result = five_partition_localize(world, _number(data["c"], "c"), _number(data["d"], "d"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        width = _cell_width(data, world.n) if world.flip_prob > 0 else None
        result = localize(world, width)
    _write_atomic(args.output, _json_text(result.to_dict()))
    return EXIT_OK


def cmd_density(args: argparse.Namespace) -> int:
    data = read_config(args.config)
    _check_keys(data, {"f_X", "n", "r_s", "grid_points"}, "config")
    for key in ("f_X", "n", "r_s"):
        if key not in data:
            raise ConfigError(f"density config needs '{key}'")
    try:
        f_X = SpatialPdf.from_spec(data["f_X"])
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid f_X: {exc}") from exc
    n = data["n"]
    if isinstance(n, bool) or not isinstance(n, int):
        raise ConfigError("n must be an integer")
    r_s = _number(data["r_s"], "r_s")
    if not 0.0 < r_s < 0.5:
        raise ConfigError(f"r_s must be in (0, 1/2), got {r_s}")
    if n < 1:
        raise ConfigError("n must be >= 1")
    points = data.get("grid_points", 4097)
    if isinstance(points, bool) or not isinstance(points, int) or points < 3:
        raise ConfigError("grid_points must be an integer >= 3")
    sol = optimal_density(f_X, n, r_s, grid_points=points)
    p_unif = miss_probability(f_X, SpatialPdf.uniform(), n, r_s)
    lines = ["x,f_X,f_lambda"]
    lines += [f"{x:.12g},{fx:.12g},{fl:.12g}" for x, fx, fl in zip(sol.x, sol.f_x_values, sol.f_lambda_values)]
    summary = {
        "f_X": f_X.to_spec() if f_X.kind != "tabulated" else {"kind": "tabulated", "points": len(f_X.values)},
        "n": n, "r_s": r_s, "mu": sol.mu, "p_miss_opt": sol.p_miss, "p_miss_unif": p_unif,
        "grid_points": sol.grid_points, "clipped_fraction": sol.clipped_fraction(),
        "stationarity_residual": sol.stationarity_residual(), "tabulation_error": sol.tabulation_error,
        "version": __version__,
    }
    _write_atomic(args.output, "\n".join(lines) + "\n")
    if args.output and args.output != "-":
        _write_atomic(sidecar_path(args.output), _json_text(summary))
    else:
        sys.stderr.write(_json_text(summary))
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    data = read_config(args.config)
    if args.seed is not None:
        data = {**data, "seed": args.seed}
    config = ExperimentConfig.from_dict(data)
    result = run_experiment(config, threads=args.threads, progress=log.info)
    _write_atomic(args.output, result.to_csv())
    if args.output and args.output != "-":
        _write_atomic(sidecar_path(args.output), json.dumps(result.metadata(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace) -> int:
    from .selftest import run_all

    failures = run_all(report=lambda line: print(line, file=sys.stderr))
    return EXIT_RUNTIME if failures else EXIT_OK


COMMANDS = {
    "recover": cmd_recover,
    "localize": cmd_localize,
    "density": cmd_density,
    "experiment": cmd_experiment,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file")
    common.add_argument("--output", metavar="PATH", help="result file (default: stdout)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads for experiments")
    common.add_argument("--verbose", "-v", action="store_true", help="progress on stderr")
    parser = argparse.ArgumentParser(prog="whitespace", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "recover": "reconstruct the void region of one world",
        "localize": "estimate transmitter count and locations in one world",
        "density": "optimal sensor density for a transmitter density",
        "experiment": "run a Monte Carlo experiment grid",
        "selftest": "run the built-in example checks",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except DegenerateDensityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - top-level reporting
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
