"""Monte Carlo checks of the moment duality and the fixation phase diagram.

The duality ``E[X_t^n | X_0 = x] = E[x^{R_t} | R_0 = n]`` is estimated on
both sides independently: the left side from forward paths, the right side
from the block-counting chain. Forward and dual draws use different stream
tags, so one seed gives two independent samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import TAG_SCAN, derive_keys
from .dual import DualConfig, dual_endpoints, recurrence_probe, RecurrenceSummary
from .errors import InvalidConfig
from .forward import (ABSORBED_ONE, ABSORBED_ZERO, FixationEstimate, ForwardConfig,
                      estimate_fixation, forward_endpoints, wilson_interval)
from .measure import MONTE_CARLO, EXACT, EstimateWithError, LambdaMeasure
from .rates import RateTable, alpha_star, compare_alpha

__all__ = [
    "DualityReport", "duality_check", "uniformized_moment", "generator_matrix",
    "FixationScan", "fixation_scan", "TransienceReport", "transience_consistency",
]


def _mc(samples) -> EstimateWithError:
    samples = np.asarray(samples, dtype=float)
    se = float(samples.std(ddof=1) / math.sqrt(samples.size)) if samples.size > 1 else 0.0
    if se == 0.0 and np.all(samples == samples[0]):
        return EstimateWithError(float(samples[0]), 0.0, EXACT)
    return EstimateWithError(float(samples.mean()), se, MONTE_CARLO)


def z_score(a: EstimateWithError, b: EstimateWithError) -> float:
    diff = a.value - b.value
    s = math.hypot(a.error, b.error)
    if s == 0.0:
        return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    return diff / s


@dataclass(frozen=True)
class DualityReport:
    x: float
    n: int
    t: float
    lhs: EstimateWithError
    rhs: EstimateWithError
    z_score: float
    capped: int = 0

    def as_dict(self):
        return {"x": self.x, "n": self.n, "t": self.t,
                "lhs": self.lhs.value, "lhs_se": self.lhs.error,
                "rhs": self.rhs.value, "rhs_se": self.rhs.error,
                "z_score": self.z_score, "capped": self.capped}


def duality_check(measure: LambdaMeasure, alpha: float, x: float, n: int, t: float,
                  reps: int, *, seed: int = 0, threads: int = 1, eps: float | None = None,
                  n_cap: int = 10 ** 6) -> DualityReport:
    """Estimate both sides of the moment duality with ``reps`` replicates each."""
    if not 0.0 <= x <= 1.0:
        raise InvalidConfig(f"x must lie in [0, 1], got {x}")
    if int(n) != n or n < 1:
        raise InvalidConfig(f"n must be a positive integer, got {n}")
    if not (t >= 0 and math.isfinite(t)):
        raise InvalidConfig(f"t must be finite and >= 0, got {t}")
    fcfg = ForwardConfig(measure, x, alpha, eps=eps, t_max=t, seed=seed)
    xs, _ = forward_endpoints(fcfg, reps, threads)
    lhs = _mc(xs ** n)
    dcfg = DualConfig(measure, alpha, int(n), t, n_cap, seed)
    r, _, _, capped = dual_endpoints(dcfg, reps, threads)
    rhs = _mc(np.power(x, r.astype(float)))
    return DualityReport(float(x), int(n), float(t), lhs, rhs, z_score(lhs, rhs), int(capped.sum()))


def generator_matrix(measure: LambdaMeasure, alpha: float = 0.0, n_cap: int = 50) -> np.ndarray:
    """Generator of R on states 1..n_cap; index i holds state i + 1.

    Branching out of ``n_cap`` is suppressed, so with ``alpha > 0`` the
    matrix is a truncation.
    """
    rt = RateTable(measure, alpha, n_max=max(n_cap, 2))
    Q = np.zeros((n_cap, n_cap))
    for n in range(2, n_cap + 1):
        w = rt.jump_weights(n)
        for k, rate in enumerate(w, start=2):
            Q[n - 1, n - k] += rate
    for n in range(1, n_cap):
        Q[n - 1, n] += alpha * n
    Q[np.diag_indices(n_cap)] = -Q.sum(axis=1)
    return Q


def uniformized_moment(measure: LambdaMeasure, x: float, n: int, t: float, *,
                       alpha: float = 0.0, n_cap: int = 50, tol: float = 1e-14) -> float:
    """``E[x^{R_t} | R_0 = n]`` by uniformization of the truncated generator.

    Exact for ``alpha = 0`` (the chain never exceeds n) up to ``tol``.
    """
    if not 1 <= n <= n_cap:
        raise InvalidConfig(f"need 1 <= n <= n_cap, got n={n}")
    Q = generator_matrix(measure, alpha, n_cap)
    q = float(max(-Q.diagonal().min(), 1e-300))
    P = np.eye(n_cap) + Q / q
    v = np.power(float(x), np.arange(1, n_cap + 1, dtype=float))
    # sum_j Poisson(qt; j) P^j v, accumulated until the Poisson tail is below tol
    lam = q * t
    log_w = -lam
    total = math.exp(log_w) * v
    acc = math.exp(log_w)
    j = 0
    while 1.0 - acc > tol and j < 100000:
        j += 1
        v = P @ v
        log_w += math.log(lam) - math.log(j)
        w = math.exp(log_w)
        total = total + w * v
        acc += w
        if j > lam and w < tol * 1e-3:
            break
    return float(total[n - 1])


@dataclass(frozen=True)
class FixationScan:
    rows: list
    alpha_star: float
    band: float
    violations: list = field(default_factory=list)

    COLUMNS = ("alpha", "p_one", "se_one", "p_zero", "se_zero", "undecided", "classification")


def fixation_scan(measure: LambdaMeasure, x0: float, alpha_grid, reps: int, t_max: float, *,
                  seed: int = 0, threads: int = 1, eps: float | None = None) -> FixationScan:
    """Fixation probabilities over a sorted grid of selection rates.

    Rows within half the smallest grid spacing of the threshold are marked
    'critical'. Rises of p_one between neighbours beyond twice the combined
    standard error are listed in ``violations``; they are reported, not
    raised.
    """
    grid = [float(a) for a in alpha_grid]
    if not grid:
        raise InvalidConfig("alpha_grid must be nonempty")
    if any(b < a for a, b in zip(grid[:-1], grid[1:])):
        raise InvalidConfig("alpha_grid must be sorted")
    a_star = alpha_star(measure)
    gaps = [b - a for a, b in zip(grid[:-1], grid[1:]) if b > a]
    band = 0.5 * min(gaps) if gaps else 0.0
    seeds = derive_keys(seed, np.arange(len(grid)), TAG_SCAN)
    rows = []
    for alpha, s in zip(grid, seeds):
        cfg = ForwardConfig(measure, x0, alpha, eps=eps, t_max=t_max, seed=int(s))
        est = estimate_fixation(cfg, reps, threads)
        rows.append({"alpha": alpha, "p_one": est.p_one.value, "se_one": est.p_one.error,
                     "p_zero": est.p_zero.value, "se_zero": est.p_zero.error,
                     "undecided": est.undecided,
                     "classification": compare_alpha(alpha, a_star, band)})
    violations = []
    for lo, hi in zip(rows[:-1], rows[1:]):
        slack = 2.0 * math.hypot(lo["se_one"], hi["se_one"])
        if hi["p_one"] - lo["p_one"] > slack:
            violations.append((lo["alpha"], hi["alpha"], hi["p_one"] - lo["p_one"], slack))
    return FixationScan(rows, a_star, band, violations)


@dataclass(frozen=True)
class TransienceReport:
    verdict: str  # "consistent", "contradiction" or "inconclusive"
    reason: str
    probe: RecurrenceSummary
    fixation: FixationEstimate
    p_one_interval: tuple
    mean_x: EstimateWithError

    def as_dict(self):
        return {"verdict": self.verdict, "reason": self.reason, "probe": self.probe.as_dict(),
                "p_one": self.fixation.p_one.value, "p_zero": self.fixation.p_zero.value,
                "undecided": self.fixation.undecided, "p_one_interval": list(self.p_one_interval),
                "mean_x": self.mean_x.value, "mean_x_se": self.mean_x.error}


def transience_consistency(measure: LambdaMeasure, alpha: float, n0: int, reps: int,
                           t_max: float, *, x0: float = 0.5, probe_t_max: float | None = None,
                           seed: int = 0, threads: int = 1,
                           eps: float | None = None) -> TransienceReport:
    """Cross-check the dual chain's behaviour against forward fixation.

    A transient dual forces ``X_inf = 0``, so a p_one interval (99% Wilson)
    above 0 contradicts it. A recurrent dual forces both outcomes, so zero
    observed fixations contradict it. With ``alpha = 0`` the dual is
    absorbed at 1 and the check is the martingale identity ``E[X_t] = x0``.
    """
    probe_cfg = DualConfig(measure, alpha, n0, probe_t_max or t_max, max(10 ** 6, 8 * n0), seed)
    probe = recurrence_probe(probe_cfg, min(reps, 1000), threads)
    fcfg = ForwardConfig(measure, x0, alpha, eps=eps, t_max=t_max, seed=seed)
    xs, outcome = forward_endpoints(fcfg, reps, threads)
    k1 = int(np.sum(outcome == ABSORBED_ONE))
    k0 = int(np.sum(outcome == ABSORBED_ZERO))
    fix = FixationEstimate(
        EstimateWithError(k1 / reps, math.sqrt(k1 / reps * (1 - k1 / reps) / reps), MONTE_CARLO),
        EstimateWithError(k0 / reps, math.sqrt(k0 / reps * (1 - k0 / reps) / reps), MONTE_CARLO),
        (reps - k1 - k0) / reps,
        {"AbsorbedOne": k1, "AbsorbedZero": k0, "Undecided": reps - k1 - k0}, reps)
    interval = wilson_interval(k1, reps, 2.5758293035489004)
    mean_x = _mc(xs)
    if alpha == 0.0:
        z = (mean_x.value - x0) / mean_x.error if mean_x.error > 0 else 0.0
        ok = abs(z) <= 3.0
        verdict = "consistent" if ok else "contradiction"
        reason = f"absorbing dual; mean X_t - x0 = {mean_x.value - x0:.3g} ({z:.2f} se)"
    elif probe.behaviour == "transient":
        ok = interval[0] == 0.0
        verdict = "consistent" if ok else "contradiction"
        reason = f"transient dual; {k1} fixations, 99% lower bound {interval[0]:.3g}"
    elif probe.behaviour == "recurrent":
        ok = k1 > 0
        verdict = "consistent" if ok else "contradiction"
        reason = f"recurrent dual; {k1} fixations, 99% lower bound {interval[0]:.3g}"
    else:
        verdict = "inconclusive"
        reason = "dual probe shows neither clear return nor escape"
    return TransienceReport(verdict, reason, probe, fix, interval, mean_x)
