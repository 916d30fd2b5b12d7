import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from lambdawf.errors import DivergentIntegral, InvalidMeasure, KingmanUnsupported, ZeroMass
from lambdawf.measure import (AtomList, Beta, EstimateWithError, GridDensity, Mixture, beta,
                              dirac, integrate_nu, kingman, laplace_exponent, measure_from_dict,
                              measure_to_dict, parse_measure, sample_weighted, total_mass,
                              WeightedSampler)


def test_total_mass_examples():
    assert total_mass(beta(2, 1)).value == pytest.approx(0.5, abs=1e-15)
    assert total_mass(dirac(0.5, 1.0)).value == 1.0
    mix = Mixture(((0.5, dirac(0.3)), (0.5, beta(2, 1))))
    assert total_mass(mix).value == pytest.approx(0.75, abs=1e-12)
    assert total_mass(mix).kind == "exact"


def test_total_mass_includes_kingman():
    assert total_mass(kingman(2.0)).value == 2.0
    assert total_mass(Beta(2, 1, kingman_mass=0.25)).value == pytest.approx(0.75)
    mix = Mixture(((2.0, Beta(2, 1, kingman_mass=0.5)),), kingman_mass=0.1)
    assert total_mass(mix).value == pytest.approx(2 * 1.0 + 0.1)


def test_grid_mass_is_quadrature():
    g = GridDensity((0.0, 0.5, 1.0), (1.0, 3.0))
    est = total_mass(g)
    assert est.value == pytest.approx(2.0)
    assert est.kind == "quadrature"


@pytest.mark.parametrize("bad", [
    lambda: dirac(1.5), lambda: dirac(0.0), lambda: dirac(0.5, -1.0),
    lambda: Beta(0.0, 1.0), lambda: Beta(1.0, -2.0),
    lambda: GridDensity((0.2, 0.1), (1.0,)), lambda: GridDensity((0.0, 1.0), (0.0,)),
    lambda: Mixture(((1.0, Mixture(((1.0, dirac(0.5)),))),)),
    lambda: Mixture(((0.0, dirac(0.5)),)),
    lambda: AtomList(()),
    lambda: Beta(2, 1, kingman_mass=-1.0),
])
def test_invalid_measures_rejected(bad):
    with pytest.raises(InvalidMeasure):
        bad()


def test_estimate_invariants():
    with pytest.raises(ValueError):
        EstimateWithError(1.0, 0.1, "exact")
    with pytest.raises(ValueError):
        EstimateWithError(1.0, math.inf, "quadrature")
    with pytest.raises(ValueError):
        EstimateWithError(1.0, -1.0, "monte_carlo")


def test_integrate_nu_examples():
    assert integrate_nu(dirac(0.5), lambda x: x * x, 2).value == 1.0
    # nu(dx) = dx / x, so this is int -log(1-x) / x dx
    est = integrate_nu(beta(2, 1), lambda x, y: -math.log1p(-x) if x < 0.5 else -math.log(y), 1,
                       complement=True)
    assert est.value == pytest.approx(math.pi ** 2 / 6, rel=1e-12)


def test_integrate_nu_detects_divergence():
    with pytest.raises(DivergentIntegral) as info:
        integrate_nu(beta(1, 1), lambda x: -math.log1p(-x), 1)
    assert info.value.endpoint == 0.0
    sums = info.value.partial_sums
    assert all(b > a for a, b in zip(sums, sums[1:]))


def test_integrate_nu_excludes_kingman():
    m = Beta(2, 1, kingman_mass=5.0)
    assert integrate_nu(m, lambda x: x * x, 2).value == pytest.approx(0.5, rel=1e-12)


@given(st.lists(st.tuples(st.floats(0.01, 1.0), st.floats(0.01, 10.0)), min_size=1, max_size=5))
def test_integrate_nu_on_atoms_is_the_finite_sum(atoms):
    m = AtomList(tuple(atoms))
    f = lambda x: x * x * math.cos(x)
    expect = sum(c * f(x) / x ** 2 for x, c in atoms)
    assert integrate_nu(m, f, 2).value == pytest.approx(expect, rel=1e-14, abs=1e-14)


def test_laplace_exponent_examples():
    assert laplace_exponent(beta(2, 1), 1.0).value == pytest.approx(1.0, rel=1e-10)
    assert laplace_exponent(beta(2, 1), 2.0).value == pytest.approx(1.5, rel=1e-10)
    assert laplace_exponent(dirac(0.5), 0.0).value == 0.0
    with pytest.raises(KingmanUnsupported):
        laplace_exponent(kingman(1.0), 1.0)
    with pytest.raises(DivergentIntegral):
        laplace_exponent(beta(0.5, 1), 1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_laplace_exponent_monotone_and_concave(q1, q2):
    q1, q2 = min(q1, q2), max(q1, q2)
    m = Mixture(((1.0, beta(2, 1)), (1.0, dirac(0.4))))
    a, b = laplace_exponent(m, q1), laplace_exponent(m, q2)
    mid = laplace_exponent(m, 0.5 * (q1 + q2))
    err = a.error + b.error + mid.error
    assert a.value <= b.value + err
    assert mid.value >= 0.5 * (a.value + b.value) - 2 * err


def test_sample_weighted_single_atom():
    assert sample_weighted(dirac(0.5), lambda x: x ** 3, rng=1) == 0.5


def test_sample_weighted_two_atoms():
    m = AtomList(((0.25, 1.0), (0.75, 1.0)))
    draws = sample_weighted(m, None, rng=2, size=100000)
    p = np.mean(draws == 0.25)
    assert abs(p - 0.9) < 3 * math.sqrt(0.09 / 100000)


def _chi_square(draws, cdf, bins):
    counts, _ = np.histogram(draws, bins)
    probs = np.diff(cdf(bins))
    return stats.chisquare(counts, probs / probs.sum() * counts.sum()).pvalue


def test_sample_weighted_beta_x_squared():
    # density proportional to x on (0, 1)
    draws = sample_weighted(beta(2, 1), lambda x: x * x, rng=3, size=100000)
    assert draws.mean() == pytest.approx(2 / 3, abs=0.005)
    assert _chi_square(draws, lambda x: x * x, np.linspace(0, 1, 21)) > 0.01


def test_sample_weighted_unit_weight_restricted():
    # nu(dx) = dx / x for Beta(2,1); on [1e-3, 1] the cdf is 1 + log(x) / log(1000)
    lo = 1e-3
    draws = sample_weighted(beta(2, 1), None, rng=4, size=100000, lower=lo)
    assert draws.min() >= lo
    bins = np.geomspace(lo, 1.0, 21)
    assert _chi_square(draws, lambda x: np.log(x / lo) / np.log(1 / lo), bins) > 0.01


def test_sample_weighted_refuses_nonintegrable_weight():
    with pytest.raises(DivergentIntegral):
        WeightedSampler(beta(2, 1), None)


def test_sample_weighted_zero_mass():
    with pytest.raises(ZeroMass):
        WeightedSampler(dirac(0.5), lambda x: 0.0)


def test_sample_weighted_deterministic():
    a = sample_weighted(beta(2, 3), lambda x: x * x, rng=11, size=50)
    b = sample_weighted(beta(2, 3), lambda x: x * x, rng=11, size=50)
    assert np.array_equal(a, b)


def test_grid_density_sampling_matches_cells():
    g = GridDensity((0.2, 0.5, 1.0), (2.0, 1.0))
    draws = sample_weighted(g, lambda x: x * x, rng=5, size=100000)
    # weight x^2 cancels nu's x^-2, so the law is the normalised grid density
    frac = np.mean(draws < 0.5)
    assert frac == pytest.approx(0.6 / 1.1, abs=4 * math.sqrt(0.25 / 100000))


@pytest.mark.parametrize("m", [
    dirac(0.5, 2.0), AtomList(((0.2, 1.0), (0.9, 3.0))), beta(2, 1), Beta(0.5, 1, kingman_mass=0.3),
    kingman(1.5), GridDensity((0.0, 0.5, 1.0), (1.0, 2.0)),
    Mixture(((0.5, dirac(0.3)), (2.0, beta(2, 2))), kingman_mass=0.1),
])
def test_dict_round_trip(m):
    d = measure_to_dict(m)
    assert measure_from_dict(json.loads(json.dumps(d))) == m


def test_dict_rejects_unknown_keys():
    with pytest.raises(InvalidMeasure):
        measure_from_dict({"type": "beta", "a": 2, "b": 1, "c": 3})
    with pytest.raises(InvalidMeasure):
        measure_from_dict({"type": "gamma", "a": 2})
    with pytest.raises(InvalidMeasure):
        measure_from_dict({"type": "dirac", "x": 1.5, "c": 1})


def test_parse_shorthand():
    assert parse_measure("dirac:0.5:1") == dirac(0.5, 1.0)
    assert parse_measure("beta:2:1") == beta(2, 1)
    assert parse_measure("kingman:2") == kingman(2.0)
    assert parse_measure('{"type":"beta","a":0.5,"b":1}') == beta(0.5, 1)
    for bad in ("dirac", "beta:2", "foo:1", "dirac:x:1", "{bad json"):
        with pytest.raises(InvalidMeasure):
            parse_measure(bad)
