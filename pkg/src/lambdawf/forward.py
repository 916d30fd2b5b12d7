"""Forward simulation of the allele frequency X_t.

Between jumps X follows the logistic flow ``dx/dt = -alpha x (1 - x)`` exactly.
Reproduction events of size ``z >= eps`` arrive at rate ``nu([eps, 1])``;
an event moves ``X -> X + z (1 - X)`` with probability X and
``X -> X (1 - z)`` otherwise. Events smaller than ``eps`` are dropped: their
u-averaged effect on X is zero, and the variance they would have added,
``Lambda((0, eps))``, is reported with every path.

Replicates run side by side as numpy arrays. Each replicate draws from its
own counter-based stream keyed by ``(seed, replicate index)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _quad
from ._rng import TAG_FORWARD, Streams
from .errors import InvalidConfig, KingmanUnsupported
from .measure import (MONTE_CARLO, EstimateWithError, LambdaMeasure,
                      WeightedSampler, kingman_of, total_mass)

__all__ = [
    "ForwardConfig", "ForwardPath", "FixationEstimate", "logistic_flow",
    "simulate_forward", "forward_endpoints", "estimate_fixation", "wilson_interval",
]

UNDECIDED, ABSORBED_ZERO, ABSORBED_ONE = 0, 1, 2
OUTCOME_NAMES = {UNDECIDED: "Undecided", ABSORBED_ZERO: "AbsorbedZero", ABSORBED_ONE: "AbsorbedOne"}
RECORD_MODES = ("full", "endpoint", "events")
CHUNK = 8192


def default_eps(m: LambdaMeasure) -> float:
    """Below the smallest atom (exact simulation) and at most 1e-4 for densities."""
    xs, _ = m.atoms()
    eps = 0.5 * float(xs.min()) if xs.size else 1.0
    if m.pieces():
        eps = min(eps, 1e-4)
    return eps


def default_t_max(m: LambdaMeasure, alpha: float) -> float:
    # phi(2) = Lambda((0, 1]) since the pair-merger bracket is x**2
    phi2 = total_mass(m).value - kingman_of(m)
    return 50.0 / max(alpha, phi2, 0.1)


def lambda_mass_below(m: LambdaMeasure, eps: float) -> float:
    """``Lambda((0, eps))`` without the atom at 0."""
    xs, cs = m.atoms()
    total = float(cs[xs < eps].sum()) if xs.size else 0.0
    for p in m.pieces():
        hi = min(p.hi, eps)
        if hi > p.lo:
            v, _ = _quad.integrate_interval(lambda x, y, p=p: float(p.density(x, y)), p.lo, hi,
                                            check_left=False, check_right=False)
            total += p.weight * v
    return total


@dataclass(frozen=True)
class ForwardConfig:
    measure: LambdaMeasure
    x0: float
    alpha: float = 0.0
    eps: float | None = None
    t_max: float | None = None
    absorb_tol: float = 1e-9
    seed: int = 0
    record: str = "endpoint"

    def __post_init__(self):
        if kingman_of(self.measure) > 0:
            raise KingmanUnsupported("forward simulation needs Lambda({0}) = 0")
        if not 0.0 <= self.x0 <= 1.0:
            raise InvalidConfig(f"x0 must lie in [0, 1], got {self.x0}")
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise InvalidConfig(f"alpha must be finite and >= 0, got {self.alpha}")
        if not 0.0 < self.absorb_tol < 0.5:
            raise InvalidConfig(f"absorb_tol must lie in (0, 0.5), got {self.absorb_tol}")
        if self.record not in RECORD_MODES:
            raise InvalidConfig(f"record must be one of {RECORD_MODES}, got {self.record!r}")
        if self.eps is None:
            object.__setattr__(self, "eps", default_eps(self.measure))
        if not 0.0 < self.eps < 1.0:
            raise InvalidConfig(f"eps must lie in (0, 1), got {self.eps}")
        if self.t_max is None:
            object.__setattr__(self, "t_max", default_t_max(self.measure, self.alpha))
        if not (self.t_max >= 0 and math.isfinite(self.t_max)):
            raise InvalidConfig(f"t_max must be finite and >= 0, got {self.t_max}")


@dataclass
class ForwardPath:
    times: np.ndarray
    values: np.ndarray
    outcome: str
    n_jumps: int
    truncation_var_bound: float

    @property
    def final(self) -> float:
        return float(self.values[-1])


@dataclass(frozen=True)
class FixationEstimate:
    p_one: EstimateWithError
    p_zero: EstimateWithError
    undecided: float
    counts: dict
    replicates: int

    def wilson(self, which: str = "one", z: float = 2.5758293035489004) -> tuple[float, float]:
        """Wilson score interval for P[AbsorbedOne] ('one') or P[AbsorbedZero] ('zero')."""
        k = self.counts["AbsorbedOne" if which == "one" else "AbsorbedZero"]
        return wilson_interval(k, self.replicates, z)


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("need at least one trial")
    p = k / n
    den = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    # the bounds are exactly 0 and 1 at the extremes; rounding says otherwise
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


def logistic_flow(x, alpha: float, dt):
    """Solution at time ``dt`` of ``dx/dt = -alpha x (1 - x)`` started at ``x``."""
    x = np.asarray(x, dtype=float)
    e = np.exp(-alpha * np.asarray(dt, dtype=float))
    with np.errstate(invalid="ignore"):
        out = x * e / (1.0 - x + x * e)
    out = np.where(x >= 1.0, 1.0, out)
    return float(out) if out.ndim == 0 else out


def _crossing_time(x, alpha, eta):
    """Time for the logistic flow to bring x down to eta (x > eta)."""
    odds = x / (1.0 - x)
    return np.log(odds * (1.0 - eta) / eta) / alpha


class _ForwardEngine:
    def __init__(self, cfg: ForwardConfig):
        self.cfg = cfg
        self.sampler = WeightedSampler(cfg.measure, None, lower=cfg.eps)
        self.rate = self.sampler.mass
        self.var_bound = lambda_mass_below(cfg.measure, cfg.eps)

    def run(self, indices, record=False):
        cfg = self.cfg
        eta, alpha, t_max = cfg.absorb_tol, cfg.alpha, cfg.t_max
        streams = Streams(cfg.seed, indices, TAG_FORWARD)
        R = len(streams)
        x = np.full(R, float(cfg.x0))
        t = np.zeros(R)
        jumps = np.zeros(R, dtype=np.int64)
        outcome = np.full(R, UNDECIDED, dtype=np.int8)
        outcome[x <= eta] = ABSORBED_ZERO
        outcome[x >= 1.0 - eta] = ABSORBED_ONE
        alive = outcome == UNDECIDED
        log = [] if record else None
        while np.any(alive):
            idx = np.flatnonzero(alive)
            wait = streams.exponential(idx) / self.rate if self.rate > 0 else np.full(idx.size, np.inf)
            t_next = t[idx] + wait
            horizon = np.minimum(t_next, t_max)
            xi = x[idx]
            xf = logistic_flow(xi, alpha, horizon - t[idx])
            assert np.all((xf >= 0.0) & (xf <= 1.0))
            drained = xf <= eta
            if np.any(drained):
                d = idx[drained]
                t[d] = np.minimum(t[d] + _crossing_time(xi[drained], alpha, eta), horizon[drained])
                x[d] = eta
                outcome[d] = ABSORBED_ZERO
                alive[d] = False
            timeout = ~drained & (t_next > t_max)
            if np.any(timeout):
                d = idx[timeout]
                t[d] = t_max
                x[d] = xf[timeout]
                alive[d] = False
            jump = ~drained & ~timeout
            if np.any(jump):
                j = idx[jump]
                xj = xf[jump]
                u = streams.uniform(j)
                z = self.sampler.sample(streams.uniform(j), streams.uniform(j))
                new = np.where(u <= xj, xj + z * (1.0 - xj), xj * (1.0 - z))
                assert np.all((new >= 0.0) & (new <= 1.0)), "jump left [0, 1]"
                x[j] = new
                t[j] = t_next[jump]
                jumps[j] += 1
                lo, hi = new <= eta, new >= 1.0 - eta
                outcome[j[lo]] = ABSORBED_ZERO
                outcome[j[hi]] = ABSORBED_ONE
                alive[j[lo | hi]] = False
                if record:
                    log.append((j, t[j].copy(), new.copy()))
        return x, t, outcome, jumps, log


def _path_from_log(cfg, x_end, t_end, outcome, jumps, log, var_bound):
    ev_t = np.array([tt[0] for _, tt, _ in log]) if log else np.empty(0)
    ev_x = np.array([xx[0] for _, _, xx in log]) if log else np.empty(0)
    if cfg.record == "events":
        times, values = ev_t, ev_x
    elif cfg.record == "endpoint":
        times, values = np.array([0.0, t_end]), np.array([cfg.x0, x_end])
    else:
        times = np.concatenate([[0.0], ev_t])
        values = np.concatenate([[cfg.x0], ev_x])
        if t_end > times[-1]:
            times = np.append(times, t_end)
            values = np.append(values, x_end)
    return ForwardPath(times, values, OUTCOME_NAMES[int(outcome)], int(jumps), var_bound)


def simulate_forward(cfg: ForwardConfig, replicate: int = 0) -> ForwardPath:
    """One path of X on [0, t_max], from the stream ``(cfg.seed, replicate)``."""
    engine = _ForwardEngine(cfg)
    x, t, outcome, jumps, log = engine.run([replicate], record=cfg.record != "endpoint")
    return _path_from_log(cfg, float(x[0]), float(t[0]), outcome[0], jumps[0], log or [],
                          engine.var_bound)


def _chunks(replicates, start=0):
    return [np.arange(a, min(a + CHUNK, start + replicates))
            for a in range(start, start + replicates, CHUNK)]


def forward_endpoints(cfg: ForwardConfig, replicates: int, threads: int = 1, start: int = 0):
    """Final values and outcome codes of replicates ``start .. start + replicates - 1``."""
    if replicates < 1:
        raise InvalidConfig("replicates must be >= 1")
    engine = _ForwardEngine(cfg)
    chunks = _chunks(replicates, start)
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(engine.run, chunks))
    else:
        results = [engine.run(c) for c in chunks]
    x = np.concatenate([r[0] for r in results])
    outcome = np.concatenate([r[2] for r in results])
    return x, outcome


def estimate_fixation(cfg: ForwardConfig, replicates: int, threads: int = 1) -> FixationEstimate:
    """Monte Carlo probabilities of absorption at 1 and at 0 by ``t_max``."""
    _, outcome = forward_endpoints(cfg, replicates, threads)
    n = outcome.size
    k1 = int(np.sum(outcome == ABSORBED_ONE))
    k0 = int(np.sum(outcome == ABSORBED_ZERO))
    ku = n - k1 - k0

    def est(k):
        p = k / n
        return EstimateWithError(p, math.sqrt(p * (1 - p) / n), MONTE_CARLO)

    return FixationEstimate(est(k1), est(k0), ku / n,
                            {"AbsorbedOne": k1, "AbsorbedZero": k0, "Undecided": ku}, n)
