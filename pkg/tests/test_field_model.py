import math

import numpy as np
import pytest
from scipy import integrate, stats

from whitespace.field_model import (Deployment, ScalingLaw, SpatialPdf, generate_readings, place_transmitters,
                                    proximity_readings, sample_deployment, sample_sensors, stream)

ALL_PDFS = [SpatialPdf.uniform(), SpatialPdf.triangular(), SpatialPdf.truncated_gaussian(0.5, 0.25),
            SpatialPdf.truncated_gaussian(0.2, 0.1), SpatialPdf.tabulated([0.5, 1.0, 1.5])]


@pytest.mark.parametrize("pdf", ALL_PDFS, ids=lambda p: p.name)
def test_pdf_integrates_to_one(pdf):
    total, _ = integrate.quad(lambda x: float(pdf.pdf(x)), 0, 1, points=[0.5], limit=200)
    assert total == pytest.approx(1.0, abs=1e-9)
    assert pdf.cdf(1.0) == pytest.approx(1.0, abs=1e-12)
    assert pdf.cdf(0.0) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("pdf", ALL_PDFS, ids=lambda p: p.name)
def test_ppf_inverts_cdf(pdf):
    u = np.linspace(0.001, 0.999, 101)
    assert np.allclose(pdf.cdf(pdf.ppf(u)), u, atol=1e-10)


@pytest.mark.parametrize("pdf", ALL_PDFS, ids=lambda p: p.name)
def test_pdf_scalar_matches_vector(pdf):
    x = np.linspace(-0.1, 1.1, 57)
    assert np.allclose([pdf.pdf_scalar(v) for v in x], pdf.pdf(x), rtol=1e-14, atol=0)


def test_tabulated_validation():
    with pytest.raises(ValueError):
        SpatialPdf.tabulated([1.5, -0.5, 1.5])
    with pytest.raises(ValueError):
        SpatialPdf.tabulated([1.0, 2.0])
    with pytest.raises(ValueError):
        SpatialPdf.tabulated([1.0, float("nan"), 1.0])
    with pytest.raises(ValueError):
        SpatialPdf("cauchy")


def test_pdf_spec_roundtrip():
    for pdf in ALL_PDFS:
        assert SpatialPdf.from_spec(pdf.to_spec()) == pdf


def test_sample_sensors_range_and_reproducible():
    a = sample_sensors(3, SpatialPdf.uniform(), stream(42))
    assert a.shape == (3,) and np.all((0 <= a) & (a <= 1))
    assert np.array_equal(a, sample_sensors(3, SpatialPdf.uniform(), stream(42)))


def test_triangular_sample_mean():
    n = 100_000
    x = sample_sensors(n, SpatialPdf.triangular(), stream(1))
    sigma = math.sqrt(1.0 / 24.0 / n)
    assert abs(x.mean() - 0.5) <= 3 * sigma


def test_truncated_gaussian_central_mass():
    n = 100_000
    x = sample_sensors(n, SpatialPdf.truncated_gaussian(0.5, 0.25), stream(2))
    # oracle: integrate the untruncated density numerically and renormalise
    phi = lambda t: math.exp(-0.5 * ((t - 0.5) / 0.25) ** 2)
    mass = integrate.quad(phi, 0.25, 0.75)[0] / integrate.quad(phi, 0.0, 1.0)[0]
    frac = np.mean((x >= 0.25) & (x <= 0.75))
    assert abs(frac - mass) <= 3 * math.sqrt(mass * (1 - mass) / n)


def test_tabulated_sampling_matches_cdf():
    pdf = SpatialPdf.tabulated([0.4, 1.6, 0.4, 1.6, 0.4])
    x = sample_sensors(50_000, pdf, stream(3))
    assert stats.kstest(x, pdf.cdf).pvalue > 1e-3


def test_reading_examples():
    assert generate_readings(Deployment([0.55], [0.5], 0.1), stream(0)).tolist() == [1]
    assert generate_readings(Deployment([0.75], [0.5], 0.1), stream(0)).tolist() == [0]


def test_flip_rate_without_transmitters():
    n, p = 100_000, 0.3
    world = Deployment([], sample_sensors(n, SpatialPdf.uniform(), stream(4)), 0.01, flip_prob=p)
    frac = generate_readings(world, stream(5)).mean()
    assert abs(frac - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_readings_match_brute_force():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n, M = rng.integers(1, 30), rng.integers(0, 6)
        r = rng.uniform(0.001, 0.3)
        tx, sensors = np.sort(rng.random(M)), rng.random(n)
        if rng.random() < 0.2:
            # put some transmitters exactly on a clearance boundary
            tx = np.sort(np.clip(np.concatenate([tx, sensors[:1] + r]), 0, 1))
        expected = [int(any(max(s - r, 0.0) <= t <= min(s + r, 1.0) for t in tx)) for s in sensors]
        assert proximity_readings(sensors, tx, r).tolist() == expected
        # away from the boundary the clipped test is plain distance <= r
        for s, got in zip(sensors, expected):
            if all(abs(abs(s - t) - r) > 1e-12 for t in tx):
                assert got == int(any(abs(s - t) <= r for t in tx))


def test_same_seed_same_world():
    kw = dict(flip_prob=0.2, sensor_pdf=SpatialPdf.triangular(), min_separation=0.05)
    a = sample_deployment(500, 3, 0.02, stream(9, 1), **kw)
    b = sample_deployment(500, 3, 0.02, stream(9, 1), **kw)
    for f in ("tx_locations", "sensor_locations", "readings"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    c = sample_deployment(500, 3, 0.02, stream(9, 2), **kw)
    assert not np.array_equal(a.sensor_locations, c.sensor_locations)


def test_streams_look_independent():
    counts = np.array([np.bincount(stream(77, k).integers(0, 10, 2000), minlength=10) for k in range(100)])
    assert stats.chisquare(counts.sum(axis=0)).pvalue > 1e-3
    firsts = np.array([stream(77, k).random() for k in range(2000)])
    assert stats.kstest(firsts, "uniform").pvalue > 1e-3
    a, b = stream(77, 0).random(10_000), stream(77, 1).random(10_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 4 / math.sqrt(10_000)


def test_place_transmitters_examples():
    assert place_transmitters(0, 0.0, "uniform", stream(0)).size == 0
    x = place_transmitters(2, 0.4, "uniform", stream(1))
    assert x.size == 2 and x[1] - x[0] >= 0.4
    with pytest.raises(ValueError):
        place_transmitters(3, 0.5, "uniform", stream(0))
    with pytest.raises(ValueError):
        place_transmitters(2, 0.3, "explicit", locations=[0.1, 0.2])
    assert place_transmitters(2, 0.0, "explicit", locations=[0.7, 0.1]).tolist() == [0.1, 0.7]


def test_order_statistics_are_beta():
    M, trials = 4, 100_000
    rng = stream(11)
    draws = np.array([place_transmitters(M, 0.0, "uniform", rng) for _ in range(trials)])
    for k in range(M):
        assert stats.kstest(draws[:, k], stats.beta(k + 1, M - k).cdf).pvalue > 1e-3


def test_pdf_placement_follows_pdf():
    rng = stream(12)
    x = np.concatenate([place_transmitters(1, 0.0, "pdf", rng, pdf=SpatialPdf.triangular()) for _ in range(20_000)])
    assert stats.kstest(x, SpatialPdf.triangular().cdf).pvalue > 1e-3


def test_deployment_validation():
    with pytest.raises(ValueError):
        Deployment([0.5], [0.2, 1.3], 0.1)
    with pytest.raises(ValueError):
        Deployment([0.5], [0.2], 0.0)
    with pytest.raises(ValueError):
        Deployment([0.5], [0.2], 0.1, flip_prob=0.5)
    with pytest.raises(ValueError):
        Deployment([0.5], [0.2], 0.1, readings=[1, 0])
    w = Deployment([0.9, 0.1], [0.2], 0.1)
    assert w.tx_locations.tolist() == [0.1, 0.9]
    with pytest.raises(ValueError):
        w.require_readings()


@pytest.mark.parametrize("kind", ["log_n_over_n", "log_n_over_n_squared", "sqrt_log_n_over_n"])
def test_scaling_laws_decrease(kind):
    law = ScalingLaw(kind)
    n = np.unique(np.concatenate([np.arange(3, 1000), np.logspace(3, 7, 2000)]))
    vals = np.array([law(v) for v in n])
    assert np.all(np.diff(vals) < 0)
    assert law(2) > 0


def test_scaling_law_specs():
    assert ScalingLaw.from_spec("log_n_over_n")(100) == pytest.approx(math.log(100) / 100)
    assert ScalingLaw.from_spec({"kind": "log_n_over_n", "coefficient": 4})(100) == pytest.approx(4 * math.log(100) / 100)
    assert ScalingLaw.from_spec(0.25)(10) == 0.25
    assert ScalingLaw("sqrt_log_n_over_n")(100) == pytest.approx(math.sqrt(math.log(100) / 100))
    with pytest.raises(ValueError):
        ScalingLaw("log_n", 1.0)
    with pytest.raises(ValueError):
        ScalingLaw("constant", 0.0)
