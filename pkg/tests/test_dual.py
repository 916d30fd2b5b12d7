import math

import numpy as np
import pytest
from scipy import stats

from lambdawf._rng import TAG_DUAL, Streams, single_stream
from lambdawf.dual import (DualConfig, DualEngine, absorption_time_stats, dual_endpoints,
                           next_event, recurrence_probe, simulate_dual)
from lambdawf.errors import InvalidConfig
from lambdawf.measure import AtomList, Mixture, beta, dirac, kingman
from lambdawf.rates import RateTable, alpha_star, cdi_classify, et_bound


def _merger_sizes(m, n, events, seed=0):
    engine = DualEngine(m, 0.0)
    s = Streams(seed, np.arange(events), TAG_DUAL)
    _, new = engine.step(np.full(events, n), s, np.arange(events))
    return n - new + 1


def _k_law_pvalue(m, n, events=100000, seed=0):
    k = _merger_sizes(m, n, events, seed)
    if n == 2:
        return 1.0 if np.all(k == 2) else 0.0
    w = RateTable(m, n_max=max(n, 2)).jump_weights(n)
    expected = w / w.sum() * events
    observed = np.bincount(k, minlength=n + 1)[2:n + 1]
    keep = expected > 5
    # lump the sparse cells so the chi-square approximation holds
    obs = np.append(observed[keep], observed[~keep].sum())
    exp = np.append(expected[keep], expected[~keep].sum())
    if exp[-1] == 0:
        obs, exp = obs[:-1], exp[:-1]
    return stats.chisquare(obs, exp).pvalue


def test_next_event_branch_from_one():
    rt = RateTable(dirac(0.5), alpha=2.0, n_max=8)
    rng = single_stream(1, 0, TAG_DUAL)
    waits = []
    for _ in range(2000):
        w, n = next_event(1, rt, rng)
        assert n == 2
        waits.append(w)
    assert np.mean(waits) == pytest.approx(0.5, rel=0.1)


def test_next_event_absorbing_at_one():
    rt = RateTable(dirac(0.5), alpha=0.0, n_max=8)
    w, n = next_event(1, rt, single_stream(0))
    assert w == math.inf and n == 1


def test_star_shaped_single_transition():
    rt = RateTable(dirac(1.0), n_max=8)
    rng = single_stream(2, 0, TAG_DUAL)
    for _ in range(100):
        assert next_event(5, rt, rng)[1] == 1


def test_dirac_k_law_at_three():
    k = _merger_sizes(dirac(0.5), 3, 100000)
    p2 = np.mean(k == 2)
    assert set(np.unique(k)) == {2, 3}
    assert abs(p2 - 0.75) < 4 * math.sqrt(0.75 * 0.25 / 100000)


@pytest.mark.parametrize("n", [2, 3, 5, 8, 10])
@pytest.mark.parametrize("m", [dirac(0.5), dirac(0.1), AtomList(((0.2, 1.0), (0.9, 2.0)))])
def test_k_law_dirac(m, n):
    assert _k_law_pvalue(m, n, seed=n) > 0.01


@pytest.mark.parametrize("n", [2, 4, 7, 10])
def test_k_law_two_stage_beta(n):
    assert _k_law_pvalue(beta(2, 1), n, seed=100 + n) > 0.01


def test_k_law_mixture_with_kingman():
    m = Mixture(((1.0, dirac(0.3)), (1.0, beta(2, 2))), kingman_mass=0.5)
    assert _k_law_pvalue(m, 8, seed=7) > 0.01


def test_k_law_large_n_stays_bounded():
    k = _merger_sizes(beta(0.5, 1), 5000, 20000, seed=3)
    assert k.min() >= 2 and k.max() <= 5000
    w = RateTable(beta(0.5, 1), n_max=8).jump_weights(5000)
    p2 = w[0] / w.sum()
    assert abs(np.mean(k == 2) - p2) < 4 * math.sqrt(p2 * (1 - p2) / k.size)


def test_config_validation():
    for kw in ({"n0": 0}, {"n0": 5, "n_cap": 5}, {"n0": 2, "alpha": -1.0},
               {"n0": 2, "alpha": 1.0, "t_max": math.inf}, {"n0": 2, "record": "events"}):
        with pytest.raises(InvalidConfig):
            DualConfig(dirac(0.5), **kw)


@pytest.mark.parametrize("alpha", [0.0, 1.5])
def test_path_legality(alpha):
    m = Mixture(((1.0, dirac(0.4)), (1.0, beta(2, 1))), kingman_mass=0.2)
    cfg = DualConfig(m, alpha, 12, 5.0, record="full", seed=4)
    for r in range(30):
        p = simulate_dual(cfg, r)
        assert np.all(p.values >= 1)
        values = p.values
        if p.times[-1] == cfg.t_max and values.size > 1 and values[-1] == values[-2]:
            values = values[:-1]  # horizon point, not an event
        steps = np.diff(values)
        assert np.all((steps == 1) | ((steps <= -1) & (steps >= -(values[:-1] - 1))))
        if alpha == 0.0:
            assert np.all(steps <= 0)
        assert np.all(np.diff(p.times) >= 0)


def test_yule_limit():
    cfg = DualConfig(dirac(0.5, 1e-9), 1.0, 1, 1.0, seed=5)
    n, _, _, _ = dual_endpoints(cfg, 100000)
    se = n.std(ddof=1) / math.sqrt(n.size)
    assert abs(n.mean() - math.e) <= 3 * se


def test_kingman_absorption_time():
    mean, se = absorption_time_stats(kingman(1.0), 200, 10000, seed=1)
    assert abs(mean - 2 * (1 - 1 / 200)) <= 3 * se


def test_star_shaped_absorption_is_exponential():
    cfg = DualConfig(dirac(1.0), 0.0, 100, math.inf, seed=2)
    _, _, hit, _ = dual_endpoints(cfg, 20000)
    assert stats.kstest(hit, "expon").pvalue > 0.01


def test_beta_coalescent_absorption_below_bound():
    m = beta(0.5, 1)
    bound = et_bound(m, 1 << 14, cdi_classify(m, 1 << 14))
    mean, se = absorption_time_stats(m, 50, 4000, seed=3)
    assert mean <= bound + 3 * se


def test_capped_paths_are_flagged():
    cfg = DualConfig(dirac(0.5), 6.0, 5, 50.0, n_cap=200, seed=6)
    n, _, _, capped = dual_endpoints(cfg, 200)
    assert capped.all()
    assert np.all(n >= 200)
    p = simulate_dual(cfg, 0)
    assert p.capped


def test_replicate_determinism_and_threads():
    cfg = DualConfig(beta(2, 1), 1.0, 6, 2.0, seed=11)
    a = dual_endpoints(cfg, 20000, threads=1)
    b = dual_endpoints(cfg, 20000, threads=3)
    for x, y in zip(a, b):
        assert np.array_equal(x, y, equal_nan=True)
    p = simulate_dual(cfg, 17000)
    assert p.final == a[0][17000]


def test_full_record_matches_endpoint():
    full = DualConfig(beta(2, 1), 1.0, 6, 2.0, seed=12, record="full")
    end = DualConfig(beta(2, 1), 1.0, 6, 2.0, seed=12)
    for r in range(10):
        assert simulate_dual(full, r).final == simulate_dual(end, r).final


def test_recurrence_probe_below_threshold():
    s = recurrence_probe(DualConfig(dirac(0.5), 1.0, 5, 100.0, seed=1), 1000)
    assert s.return_fraction >= 0.99
    assert s.behaviour == "recurrent"
    assert s.alpha_class == "below"


def test_recurrence_probe_above_threshold():
    s = recurrence_probe(DualConfig(dirac(0.5), 6.0, 5, 20.0, seed=2), 1000)
    assert s.fraction_above_start >= 0.95
    assert s.drift_sign == 1
    assert s.behaviour == "transient"


def test_recurrence_probe_neutral():
    s = recurrence_probe(DualConfig(beta(0.5, 1), 0.0, 5, 50.0, seed=3), 500)
    assert s.return_fraction == 1.0
    assert s.mean_endpoint == 1.0


def test_recurrence_probe_gives_no_verdict_at_threshold():
    m = dirac(0.5)
    s = recurrence_probe(DualConfig(m, alpha_star(m), 5, 20.0, seed=4), 200)
    assert s.alpha_class == "critical"
    assert s.behaviour == "unclear"
