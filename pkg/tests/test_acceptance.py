"""Acceptance suite: one test per criterion, each logging a single PASS/FAIL line.

The lines are repeated in the terminal summary under "acceptance criteria".
Tolerances, replicate counts and runtime budgets are fixed constants below.
"""
import math
import time

import numpy as np
from scipy import integrate

from lambdawf.cli import main
from lambdawf.dual import absorption_time_stats
from lambdawf.duality import duality_check, transience_consistency, uniformized_moment
from lambdawf.forward import ForwardConfig, estimate_fixation, forward_endpoints
from lambdawf.measure import AtomList, beta, dirac, kingman
from lambdawf.rates import (RateTable, alpha_star, cdi_classify, check_functionf,
                            check_transience_g, et_bound)

SEED = 20240611
RATE_MEASURES = {
    "Dirac(0.5,1)": dirac(0.5, 1.0),
    "Beta(2,1)": beta(2, 1),
    "Beta(2,3)": beta(2, 3),
    "two atoms": AtomList(((0.2, 1.0), (0.7, 0.5))),
}


class Criterion:
    def __init__(self, number, title, budget, log):
        self.number, self.title, self.budget, self.log = number, title, budget, log
        self.failures = []
        self.start = time.perf_counter()

    def check(self, ok, detail):
        if not ok:
            self.failures.append(detail)

    def finish(self):
        elapsed = time.perf_counter() - self.start
        self.check(elapsed < self.budget, f"runtime {elapsed:.1f}s over {self.budget}s")
        status = "PASS" if not self.failures else "FAIL"
        line = f"criterion {self.number}: {status} {self.title} ({elapsed:.1f}s / {self.budget}s)"
        if self.failures:
            line += " :: " + "; ".join(self.failures[:5])
        self.log.append(line)
        print(line)
        assert not self.failures, line


def _rel(a, b):
    return abs(a - b) / abs(b)


def _hurwitz(b, terms=400000):
    k = np.arange(terms, dtype=float)
    return np.sum((b + k) ** -2.0) + 1.0 / (b + terms) + 0.5 / (b + terms) ** 2


def _t_integral(a):
    f = lambda t: t * math.exp(-t) * (-math.expm1(-t)) ** (a - 3)
    return integrate.quad(f, 0, math.inf, epsabs=0, epsrel=1e-12, limit=500)[0]


def test_criterion_1_alpha_star_closed_forms(acceptance_log):
    c = Criterion(1, "alpha* closed forms", 5.0, acceptance_log)
    for x in np.linspace(0.1, 0.9, 9):
        for w in (0.5, 1.0, 3.0):
            ref = -w * math.log1p(-x) / x ** 2
            err = _rel(alpha_star(dirac(x, w)), ref)
            c.check(err <= 1e-10, f"Dirac({x:.1f},{w}) rel err {err:.2e}")
    for b in (0.5, 1.0, 2.0, 5.0):
        err = _rel(alpha_star(beta(2, b)), _hurwitz(b))
        c.check(err <= 1e-8, f"Beta(2,{b}) rel err {err:.2e}")
    for a in (1.5, 2.5):
        err = _rel(alpha_star(beta(a, 1)), _t_integral(a))
        c.check(err <= 1e-6, f"Beta({a},1) rel err {err:.2e}")
    c.check(alpha_star(beta(1, 1)) == math.inf, "Beta(1,1) finite")
    c.check(alpha_star(dirac(1.0, 1.0)) == math.inf, "Dirac(1,1) finite")
    c.finish()


def test_criterion_2_rate_identities(acceptance_log):
    c = Criterion(2, "rate identities", 10.0, acceptance_log)
    for name, m in RATE_MEASURES.items():
        t = RateTable(m, n_max=51)
        worst = 0.0
        for n in range(2, 51):
            for k in range(2, n + 1):
                lhs = t.lambda_nk(n, k)
                rhs = t.lambda_nk(n + 1, k) + t.lambda_nk(n + 1, k + 1)
                if lhs != rhs:
                    worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
        c.check(worst <= 1e-9, f"{name} recursion rel err {worst:.2e}")
        worst = max(_rel(t.jump_weights(n).sum(), t.phi(n)) for n in range(2, 31))
        c.check(worst <= 1e-9, f"{name} phi sum rel err {worst:.2e}")
    c.finish()


def test_criterion_3_delta_structure(acceptance_log):
    c = Criterion(3, "delta/psi structure", 30.0, acceptance_log)
    m = dirac(0.5, 1.0)
    t = RateTable(m, n_max=10 ** 4)
    n = np.arange(2, 10 ** 4 + 1)
    d, p = t.delta_array[2:], t.psi_array[2:]
    c.check(bool(np.all(d >= p)), f"delta < psi at n={n[np.argmin(d - p)]}")
    ratio = d / n
    # one ulp of slack; the ratio flattens to alpha* at large n
    drops = np.diff(ratio) < -4 * np.finfo(float).eps * ratio[1:]
    c.check(not drops.any(), f"delta/n decreases at n={n[1:][drops][:3]}")
    err = _rel(t.delta(10 ** 5) / 10 ** 5, alpha_star(m))
    c.check(err <= 0.01, f"delta(1e5)/1e5 off alpha* by {err:.2%}")
    c.finish()


def test_criterion_4_lyapunov_and_transience(acceptance_log):
    c = Criterion(4, "Lyapunov inequality and transience sign", 60.0, acceptance_log)
    for m in (dirac(0.5, 1.0), beta(2, 1)):
        for alpha in (0.0, 1.0):
            t = RateTable(m, alpha, n_max=202)
            for l in range(2, 201):
                lhs, rhs = check_functionf(t, l)
                c.check(lhs <= rhs + 1e-6, f"{m} alpha={alpha} l={l}: {lhs:.6g} > {rhs:.6g}")
    m = dirac(0.5, 1.0)
    a = alpha_star(m)
    above, zero = RateTable(m, 2 * a, n_max=2001), RateTable(m, 0.0, n_max=2001)
    for n in range(500, 2001):
        g_above, g_zero = check_transience_g(above, n), check_transience_g(zero, n)
        c.check(g_above < 0, f"alpha=2a* n={n}: {g_above:.3g} not negative")
        c.check(g_zero > 0, f"alpha=0 n={n}: {g_zero:.3g} not positive")
    c.finish()


def test_criterion_5_coming_down_and_absorption(acceptance_log):
    c = Criterion(5, "CDI and absorption time", 180.0, acceptance_log)
    K = 1 << 14
    v = cdi_classify(kingman(1.0), K)
    bound = et_bound(kingman(1.0), K, v)
    c.check(v.verdict == "ComesDown", f"Kingman verdict {v.verdict}")
    c.check(abs(bound - 4.0) <= 1e-6, f"Kingman et_bound {bound!r}")
    mean, se = absorption_time_stats(kingman(1.0), 200, 10 ** 4, seed=SEED)
    c.check(1.9 <= mean <= 2.1, f"Kingman mean from 200 = {mean:.4f}")
    m = beta(0.5, 1)
    v = cdi_classify(m, K)
    c.check(v.verdict == "ComesDown", f"Beta(0.5,1) verdict {v.verdict}")
    bound = et_bound(m, K, v)
    mean, se = absorption_time_stats(m, 50, 10 ** 4, seed=SEED)
    c.check(mean <= bound + 3 * se, f"Beta(0.5,1) mean {mean:.4f} > bound {bound:.4f} + 3se")
    for m in (beta(2, 1), dirac(0.5, 1.0)):
        verdict = cdi_classify(m, K).verdict
        c.check(verdict == "StaysInfinite", f"{m} verdict {verdict}")
    c.finish()


def test_criterion_6_duality(acceptance_log):
    c = Criterion(6, "moment duality", 300.0, acceptance_log)
    reps = 10 ** 5
    star = 0.6 ** 3 * math.exp(-1) + 0.6 * (1 - math.exp(-1))
    r = duality_check(dirac(1.0), 0.0, 0.6, 3, 1.0, reps, seed=SEED)
    for side, est in (("lhs", r.lhs), ("rhs", r.rhs)):
        c.check(abs(est.value - star) <= 3 * est.error,
                f"star {side} {est.value:.5f} vs {star:.5f} (se {est.error:.1e})")
    for i, (x, n, t) in enumerate((x, n, t) for x in (0.1, 0.5, 0.9)
                                  for n in (1, 2, 5) for t in (0.1, 1.0)):
        r = duality_check(beta(2, 1), 1.0, x, n, t, reps, seed=SEED + i)
        c.check(abs(r.z_score) <= 4, f"grid x={x} n={n} t={t} z={r.z_score:.2f}")
    m = dirac(0.5, 1.0)
    for x, t in ((0.4, 1.0), (0.8, 0.5)):
        xs, _ = forward_endpoints(ForwardConfig(m, x, t_max=t, seed=SEED), reps)
        for n in range(1, 6):
            v = xs ** n
            exact = uniformized_moment(m, x, n, t)
            se = v.std(ddof=1) / math.sqrt(reps)
            c.check(abs(v.mean() - exact) <= 3 * se,
                    f"uniformization x={x} n={n} t={t}: {v.mean():.5f} vs {exact:.5f}")
    c.finish()


def test_criterion_7_phase_transition(acceptance_log):
    c = Criterion(7, "phase transition at alpha*", 600.0, acceptance_log)
    m = dirac(0.5, 1.0)
    below = estimate_fixation(ForwardConfig(m, 0.5, 1.0, t_max=200.0, seed=SEED), 10 ** 4)
    lo, _ = below.wilson("one")
    c.check(lo > 0, f"alpha=1 p_one 99% lower bound {lo}")
    above = estimate_fixation(ForwardConfig(m, 0.5, 6.0, t_max=200.0, seed=SEED), 10 ** 4)
    c.check(above.counts["AbsorbedOne"] == 0, f"alpha=6 fixations {above.counts['AbsorbedOne']}")
    c.check(above.p_zero.value >= 0.99, f"alpha=6 p_zero {above.p_zero.value}")
    for alpha, probe_t in ((1.0, 100.0), (6.0, 20.0)):
        rep = transience_consistency(m, alpha, 5, 10 ** 4, 200.0, probe_t_max=probe_t, seed=SEED)
        c.check(rep.verdict == "consistent", f"alpha={alpha}: {rep.verdict} ({rep.reason})")
    c.finish()


def test_criterion_8_martingale(acceptance_log):
    c = Criterion(8, "martingale and supermartingale", 120.0, acceptance_log)
    for m in (beta(2, 1), dirac(0.5, 1.0)):
        xs, _ = forward_endpoints(ForwardConfig(m, 0.3, t_max=1.0, seed=SEED), 10 ** 5)
        se = xs.std(ddof=1) / math.sqrt(xs.size)
        c.check(abs(xs.mean() - 0.3) <= 3 * se, f"{m} alpha=0 mean {xs.mean():.5f} (se {se:.1e})")
        xs, _ = forward_endpoints(ForwardConfig(m, 0.3, 1.0, t_max=1.0, seed=SEED), 10 ** 5)
        se = xs.std(ddof=1) / math.sqrt(xs.size)
        c.check(xs.mean() <= 0.3 + 3 * se, f"{m} alpha=1 mean {xs.mean():.5f} (se {se:.1e})")
    c.finish()


REPRO_RUNS = [
    ["duality-check", "-m", "beta:2:1", "--alpha", "1", "--x", "0.5", "--n", "5", "--t", "1",
     "--reps", "100000"],
    ["duality-check", "-m", "dirac:1:1", "--x", "0.6", "--n", "3", "--t", "1", "--reps", "100000"],
    ["fixation-scan", "-m", "dirac:0.5:1", "--x0", "0.5", "--alpha-grid", "1,6", "--reps", "10000",
     "--t", "200"],
    ["simulate-forward", "-m", "beta:2:1", "--x0", "0.3", "--t", "1", "--reps", "100000"],
    ["simulate-dual", "-m", "dirac:0.5:1", "--alpha", "6", "--n0", "5", "--t", "20",
     "--reps", "1000", "--probe"],
    ["simulate-dual", "-m", "beta:0.5:1", "--n0", "50", "--reps", "10000", "--format", "json"],
]


def test_criterion_9_reproducibility(acceptance_log, tmp_path, monkeypatch):
    c = Criterion(9, "byte-identical outputs across thread counts", 300.0, acceptance_log)
    for i, argv in enumerate(REPRO_RUNS):
        outputs = []
        for threads in ("1", "2", "4"):
            # same relative output path in each directory so the echoed config matches
            (tmp_path / f"{i}-{threads}").mkdir()
            monkeypatch.chdir(tmp_path / f"{i}-{threads}")
            code = main(argv + ["--seed", str(SEED), "--threads", threads, "--out", "result"])
            c.check(code == 0, f"{argv[0]} exit {code}")
            outputs.append((tmp_path / f"{i}-{threads}" / "result").read_bytes())
        c.check(outputs[0] == outputs[1] == outputs[2], f"{' '.join(argv[:3])} differs")
    c.finish()
