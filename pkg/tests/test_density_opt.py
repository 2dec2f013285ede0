import math

import numpy as np
import pytest
from scipy import integrate

from whitespace.density_opt import (DegenerateDensityError, IntegrandOutOfRange, clamped_miss_probability,
                                    count_misses, edge_corrected_uniform_miss, lp_norm_miss_probability,
                                    miss_probability, miss_probability_empirical, optimal_density,
                                    triangular_miss_closed_form, uniform_miss_closed_form)
from whitespace.field_model import SpatialPdf, stream

UNIFORM, TRIANGULAR = SpatialPdf.uniform(), SpatialPdf.triangular()
GAUSS = SpatialPdf.truncated_gaussian(0.5, 0.25)
GRID = [(n, r) for n in (10, 50, 200) for r in (0.001, 0.01, 0.05)]


def brute_miss(f_X, f_lam, n, r):
    # independent oracle: plain adaptive quad of the objective
    g = lambda x: (1.0 - 2.0 * r * float(f_lam.pdf(x))) ** n * float(f_X.pdf(x))
    return integrate.quad(g, 0.0, 1.0, points=[0.5], limit=500, epsabs=0, epsrel=1e-12)[0]


# closed forms -----------------------------------------------------------------

@pytest.mark.parametrize("n,r", GRID)
def test_uniform_closed_form_matches_quadrature(n, r):
    exact = (1 - 2 * r) ** n
    assert uniform_miss_closed_form(n, r) == pytest.approx(exact, rel=1e-12)
    assert miss_probability(UNIFORM, UNIFORM, n, r) == pytest.approx(exact, rel=1e-9)
    assert lp_norm_miss_probability(UNIFORM, n, r) == pytest.approx(exact, rel=1e-9)


@pytest.mark.parametrize("n,r", GRID)
def test_triangular_closed_form_matches_unclipped_optimum(n, r):
    # The closed form is the value of the unclipped stationary density, the
    # ell_p-norm expression; both are evaluated independently here.
    expected = 2 * (1 - 2 * r) ** n / ((n - 1) / (n - 2)) ** (n - 1)
    assert triangular_miss_closed_form(n, r) == pytest.approx(expected, rel=1e-12)
    assert lp_norm_miss_probability(TRIANGULAR, n, r) == pytest.approx(expected, rel=1e-9)


def test_miss_probability_examples():
    n, r = 100, math.log(100) / 100
    assert miss_probability(UNIFORM, UNIFORM, n, r) == pytest.approx((1 - 2 * r) ** n, rel=1e-9)
    assert miss_probability(UNIFORM, UNIFORM, n, r) == pytest.approx(6.5e-5, rel=0.05)
    assert miss_probability(UNIFORM, UNIFORM, 10, 0.5) == 0.0
    assert miss_probability(UNIFORM, UNIFORM, 0, 0.1) == 1.0


def test_miss_probability_against_brute_quad():
    for f_X, f_lam in [(TRIANGULAR, UNIFORM), (UNIFORM, TRIANGULAR), (GAUSS, TRIANGULAR)]:
        assert miss_probability(f_X, f_lam, 30, 0.01) == pytest.approx(brute_miss(f_X, f_lam, 30, 0.01), rel=1e-8)


def test_miss_probability_decreasing_in_n():
    vals = [miss_probability(GAUSS, TRIANGULAR, n, 0.01) for n in (1, 5, 20, 80, 320)]
    assert np.all(np.diff(vals) < 0)


def test_out_of_range_integrand():
    with pytest.raises(IntegrandOutOfRange):
        miss_probability(UNIFORM, TRIANGULAR, 10, 0.3)
    value, clamped = clamped_miss_probability(UNIFORM, TRIANGULAR, 10, 0.3)
    assert clamped and 0.0 <= value <= 1.0
    assert clamped_miss_probability(UNIFORM, UNIFORM, 10, 0.01) == (pytest.approx(0.98**10, rel=1e-9), False)


# optimal density --------------------------------------------------------------

@pytest.mark.parametrize("n,r", GRID)
def test_uniform_optimum_is_uniform(n, r):
    sol = optimal_density(UNIFORM, n, r)
    assert np.allclose(sol.f_lambda_values, 1.0, rtol=1e-9, atol=0)
    assert sol.p_miss == pytest.approx((1 - 2 * r) ** n, rel=1e-9)


def test_n_equal_one_is_degenerate():
    with pytest.raises(DegenerateDensityError, match="degenerate"):
        optimal_density(TRIANGULAR, 1, 0.01)
    with pytest.raises(ValueError):
        optimal_density(TRIANGULAR, 10, 0.5)


def test_optimum_beats_uniform_deployment_for_triangular():
    sol = optimal_density(TRIANGULAR, 50, 0.01)
    assert sol.p_miss <= brute_miss(TRIANGULAR, UNIFORM, 50, 0.01)
    # independent re-evaluation of the reported optimum
    assert sol.p_miss == pytest.approx(miss_probability(TRIANGULAR, sol.f_lambda, 50, 0.01), rel=1e-5)


@pytest.mark.parametrize("f_X", [UNIFORM, TRIANGULAR, GAUSS, SpatialPdf.tabulated([0.4, 1.6, 0.4, 1.6, 0.4])],
                         ids=lambda p: p.name)
@pytest.mark.parametrize("n,r", [(10, 0.01), (50, 0.01), (200, 0.001), (200, 0.05)])
def test_solution_invariants(f_X, n, r):
    sol = optimal_density(f_X, n, r)
    f = sol.f_lambda_values
    assert sol.grid_points >= 4096
    assert abs(sol.normalization() - 1.0) <= 1e-6
    assert np.all(f >= 0) and np.all(f <= 1 / (2 * r) * (1 + 1e-12))
    assert np.all(f[sol.f_x_values == 0] == 0)
    assert sol.stationarity_residual() <= 1e-6
    assert 0.0 <= sol.p_miss <= 1.0 and sol.mu > 0


def test_stationarity_by_hand():
    n, r = 50, 0.01
    sol = optimal_density(GAUSS, n, r)
    f, fx = sol.f_lambda_exact, sol.f_x_values
    live = f > 0
    lhs = n * (1 - 2 * r * f[live]) ** (n - 1) * fx[live] * 2 * r
    assert np.max(np.abs(lhs / sol.mu - 1)) <= 1e-6


def test_perturbed_densities_do_worse():
    n, r = 50, 0.01
    sol = optimal_density(TRIANGULAR, n, r)
    # compare like with like: the tabulated optimum under the same quadrature
    best = miss_probability(TRIANGULAR, sol.f_lambda, n, r)
    x = sol.x
    rng = stream(31)
    for _ in range(20):
        bump = sum(rng.normal(0, 0.1) * np.sin(np.pi * k * x) for k in range(1, 6))
        f = np.clip((sol.f_lambda_values + 0.2) * (1 + bump), 0, None)
        f = f / np.trapezoid(f, x)
        f = np.minimum(f, 1 / (2 * r))
        f = f / np.trapezoid(f, x)
        if f.max() * 2 * r > 1:
            continue
        assert miss_probability(TRIANGULAR, SpatialPdf.tabulated(f), n, r) >= best


# Monte Carlo ------------------------------------------------------------------

def test_empirical_no_sensors():
    est = miss_probability_empirical(UNIFORM, UNIFORM, 0, 0.1, 10, stream(0))
    assert est.estimate == 1.0 and est.misses == 10


def test_empirical_wrap_matches_closed_form():
    n, r, trials = 50, 0.01, 200_000
    est = miss_probability_empirical(UNIFORM, UNIFORM, n, r, trials, stream(1), boundary="wrap")
    p = (1 - 2 * r) ** n
    assert abs(est.estimate - p) <= 3 * math.sqrt(p * (1 - p) / trials)


def test_empirical_clip_matches_edge_corrected():
    n, r, trials = 50, 0.01, 200_000
    est = miss_probability_empirical(UNIFORM, UNIFORM, n, r, trials, stream(2))
    p = edge_corrected_uniform_miss(n, r)
    assert abs(est.estimate - p) <= 3 * math.sqrt(p * (1 - p) / trials)


def test_edge_corrected_formula_by_quadrature():
    n, r = 40, 0.03
    g = lambda x: (1 - (min(x + r, 1) - max(x - r, 0))) ** n
    ref = integrate.quad(g, 0, 1, points=[r, 1 - r], epsrel=1e-12)[0]
    assert edge_corrected_uniform_miss(n, r) == pytest.approx(ref, rel=1e-10)


def test_binomial_method_matches_direct():
    n, r, trials = 40, 0.01, 100_000
    for f_lam in (UNIFORM, TRIANGULAR):
        a = count_misses(GAUSS, f_lam, n, r, trials, stream(3), "direct") / trials
        b = count_misses(GAUSS, f_lam, n, r, trials, stream(4), "binomial") / trials
        sd = math.sqrt(a * (1 - a) / trials + b * (1 - b) / trials)
        assert abs(a - b) <= 4 * sd


def test_triangular_sensors_worse_for_uniform_transmitter():
    n, r, trials = 200, math.log(200) / 200, 2_000_000
    tri = miss_probability_empirical(UNIFORM, TRIANGULAR, n, r, trials, stream(5), method="binomial")
    uni = miss_probability_empirical(UNIFORM, UNIFORM, n, r, trials, stream(6), method="binomial")
    sd = math.sqrt((tri.ci_halfwidth / 1.96) ** 2 + (uni.ci_halfwidth / 1.96) ** 2)
    assert tri.estimate - uni.estimate >= 3 * sd
