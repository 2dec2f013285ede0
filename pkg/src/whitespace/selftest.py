"""Built-in example checks run by ``whitespace selftest``.

Each check is a small known-answer case; :func:`run_all` reports one line
per check and returns the number of failures.
"""
from __future__ import annotations

import contextlib
import io
import json
import math
import os
import tempfile
from typing import Callable

import numpy as np

from .density_opt import miss_probability, miss_probability_empirical
from .field_model import Deployment, ScalingLaw, SpatialPdf, generate_readings, place_transmitters, sample_sensors, stream
from .geometry import DisjointRegionSet, complement, make_clipped_interval, measure, union
from .harness import ConfigError, ExperimentConfig, run_experiment
from .recovery import (five_partition_localize, localization_error, localize, majority_decode, reconstruct_void,
                       region_estimates)

CHECKS: list[tuple[str, Callable[[], None]]] = []


def check(name: str):
    def register(fn: Callable[[], None]) -> Callable[[], None]:
        CHECKS.append((name, fn))
        return fn
    return register


def _close(a, b, tol: float = 1e-12) -> bool:
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=0, atol=tol)


def _S(*pairs) -> DisjointRegionSet:
    return DisjointRegionSet(pairs)


# geometry ------------------------------------------------------------------

@check("clipped interval, interior")
def _():
    iv = make_clipped_interval(0.5, 0.1)
    assert _close([iv.lo, iv.hi], [0.4, 0.6])


@check("clipped interval, left clip")
def _():
    iv = make_clipped_interval(0.05, 0.1)
    assert (iv.lo, iv.hi) == (0.0, iv.hi) and _close(iv.hi, 0.15)


@check("clipped interval, right clip")
def _():
    iv = make_clipped_interval(1.0, 0.2)
    assert _close([iv.lo, iv.hi], [0.8, 1.0])


@check("union merges overlaps")
def _():
    assert union(_S((0, 0.2)), _S((0.1, 0.3))) == _S((0, 0.3))


@check("union with empty set")
def _():
    assert union(_S((0, 0.2)), _S()) == _S((0, 0.2))


@check("union merges touching intervals")
def _():
    assert union(_S((0, 0.1), (0.5, 0.6)), _S((0.1, 0.2))) == _S((0, 0.2), (0.5, 0.6))


@check("measure sums lengths")
def _():
    assert _close(measure(_S((0, 0.3), (0.5, 0.6))), 0.4)
    assert measure(_S()) == 0.0
    assert measure(_S((0, 1))) == 1.0


@check("complement")
def _():
    assert complement(_S((0, 1))) == _S()
    assert complement(_S((0.25, 0.75))) == _S((0, 0.25), (0.75, 1))
    assert complement(_S()) == _S((0, 1))


# field model ---------------------------------------------------------------

@check("sensor draws lie in [0, 1] and are reproducible")
def _():
    a = sample_sensors(3, SpatialPdf.uniform(), stream(11))
    b = sample_sensors(3, SpatialPdf.uniform(), stream(11))
    assert a.shape == (3,) and np.all((a >= 0) & (a <= 1)) and np.array_equal(a, b)


@check("reading: transmitter within range")
def _():
    w = Deployment([0.55], [0.5], 0.1)
    assert generate_readings(w, stream(0)).tolist() == [1]


@check("reading: transmitter out of range")
def _():
    w = Deployment([0.75], [0.5], 0.1)
    assert generate_readings(w, stream(0)).tolist() == [0]


@check("place zero transmitters")
def _():
    assert place_transmitters(0, 0.0, "uniform", stream(0)).size == 0


@check("place two transmitters with separation")
def _():
    x = place_transmitters(2, 0.4, "uniform", stream(5))
    assert x.size == 2 and x[1] - x[0] >= 0.4


# recovery ------------------------------------------------------------------

@check("void of a quiet sensor")
def _():
    w = Deployment([], [0.5], 0.1, readings=[0])
    v = reconstruct_void(w)
    assert _close(v.to_list(), [[0.4, 0.6]]) and _close(v.measure(), 0.2)


@check("void of a triggered sensor is empty")
def _():
    w = Deployment([0.55], [0.5], 0.1)
    v = reconstruct_void(w.with_readings(w.clean_readings()))
    assert len(v) == 0 and 1.0 - v.measure() == 1.0


@check("majority vote [1, 1, 0] is present")
def _():
    w = Deployment([], [0.1, 0.2, 0.3], 0.05, flip_prob=0.1, readings=[1, 1, 0])
    assert majority_decode(w, 1.0).present.tolist() == [True]


@check("majority vote [0, 0, 1] is absent")
def _():
    w = Deployment([], [0.1, 0.2, 0.3], 0.05, flip_prob=0.1, readings=[0, 0, 1])
    assert majority_decode(w, 1.0).present.tolist() == [False]


@check("no 1-readings gives no estimates")
def _():
    w = Deployment([], [0.2, 0.7], 0.1, readings=[0, 0])
    res = localize(w)
    assert res.est_count == 0 and res.est_locations.size == 0


@check("narrow region gives its midpoint")
def _():
    assert _close(region_estimates([0.4], [0.6], 0.15), [0.5])


@check("wide region gives evenly placed estimates")
def _():
    assert _close(region_estimates([0.2], [0.8], 0.1), [0.3, 0.5, 0.7])
    w = Deployment([0.5], [0.3, 0.5, 0.7], 0.1, readings=[1, 1, 1])
    assert _close(localize(w).est_locations, [0.3, 0.5, 0.7])


@check("padded localization error")
def _():
    assert localization_error([0.3], [0.3]) == 0.0
    assert _close(localization_error([0.3], [0.2, 0.9]), 1.0)
    assert _close(localization_error([0.2, 0.7], [0.25]), 0.35)


@check("five-partition estimator with no transmitters")
def _():
    n, c = 10_000, 2.0
    r = c * math.log(n) / n
    w = Deployment([], sample_sensors(n, SpatialPdf.uniform(), stream(3)), r)
    assert five_partition_localize(w.with_readings(w.clean_readings()), c, 25.0).est_count == 0


# density -------------------------------------------------------------------

@check("certain detection gives zero miss probability")
def _():
    assert miss_probability(SpatialPdf.uniform(), SpatialPdf.uniform(), 10, 0.5) == 0.0


@check("no sensors gives certain miss")
def _():
    assert miss_probability(SpatialPdf.uniform(), SpatialPdf.uniform(), 0, 0.1) == 1.0
    est = miss_probability_empirical(SpatialPdf.uniform(), SpatialPdf.uniform(), 0, 0.1, 10, stream(0))
    assert est.estimate == 1.0


# harness -------------------------------------------------------------------

@check("single-trial smoke run")
def _():
    cfg = ExperimentConfig("whitespace", (1,), M=(0,), r_s_laws=(ScalingLaw("constant", 0.5),), trials=1)
    res = run_experiment(cfg)
    assert len(res.rows) == 1 and res.rows[0].trials == 1


@check("experiment is deterministic")
def _():
    cfg = ExperimentConfig("whitespace", (50, 100), M=(1,), trials=40, seed=9, block_size=7)
    assert run_experiment(cfg).to_csv() == run_experiment(cfg, threads=3).to_csv()


@check("no transmitters localize perfectly")
def _():
    cfg = ExperimentConfig("localization", (100,), M=(0,), trials=50,
                           r_s_laws=tuple(ScalingLaw(k) for k in ("log_n_over_n", "log_n_over_n_squared",
                                                                   "sqrt_log_n_over_n")))
    res = run_experiment(cfg)
    assert all(r.p_hat == 1.0 and r.mean_metric == 0.0 for r in res.rows)


@check("zero trials is rejected")
def _():
    try:
        ExperimentConfig("whitespace", (100,), trials=0)
    except ConfigError:
        return
    raise AssertionError("trials = 0 accepted")


# cli -----------------------------------------------------------------------

def _cli(args: list[str]) -> int:
    from .cli import main

    with contextlib.redirect_stderr(io.StringIO()), contextlib.redirect_stdout(io.StringIO()):
        return main(args)


@check("cli: recover an explicit world")
def _():
    with tempfile.TemporaryDirectory() as tmp:
        cfg, out = os.path.join(tmp, "w.json"), os.path.join(tmp, "out.json")
        with open(cfg, "w") as fh:
            json.dump({"world": {"sensors": [0.5], "transmitters": [], "r_s": 0.1}}, fh)
        assert _cli(["recover", "--config", cfg, "--output", out]) == 0
        with open(out) as fh:
            got = json.load(fh)
        assert _close(got["void"], [[0.4, 0.6]]) and _close(got["measure"], 0.2)


@check("cli: missing config exits 2 without output")
def _():
    with tempfile.TemporaryDirectory() as tmp:
        out = os.path.join(tmp, "out.json")
        assert _cli(["recover", "--config", os.path.join(tmp, "nope.json"), "--output", out]) == 2
        assert not os.path.exists(out)


@check("cli: sampled world is reproducible")
def _():
    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "w.json")
        with open(cfg, "w") as fh:
            json.dump({"world": {"n": 200, "M": 2, "r_s": "log_n_over_n"}}, fh)
        outs = []
        for k in range(2):
            out = os.path.join(tmp, f"o{k}.json")
            assert _cli(["recover", "--config", cfg, "--output", out, "--seed", "7"]) == 0
            with open(out, "rb") as fh:
                outs.append(fh.read())
        assert outs[0] == outs[1]


@check("cli: zero trials exits 2")
def _():
    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "e.json")
        with open(cfg, "w") as fh:
            json.dump({"experiment": "whitespace", "n_grid": [100], "trials": 0}, fh)
        assert _cli(["experiment", "--config", cfg, "--output", os.path.join(tmp, "o.csv")]) == 2


@check("cli: negative density value exits 2")
def _():
    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "d.json")
        with open(cfg, "w") as fh:
            json.dump({"f_X": {"kind": "tabulated", "values": [1.5, -0.5, 1.5]}, "n": 10, "r_s": 0.01}, fh)
        assert _cli(["density", "--config", cfg, "--output", os.path.join(tmp, "o.csv")]) == 2


def run_all(report: Callable[[str], None] = print) -> int:
    failures = 0
    for name, fn in CHECKS:
        try:
            fn()
        except Exception as exc:  # noqa: BLE001 - every failure is reported
            failures += 1
            report(f"FAIL  {name}: {type(exc).__name__}: {exc}")
        else:
            report(f"ok    {name}")
    report(f"{len(CHECKS) - failures}/{len(CHECKS)} checks passed")
    return failures
