"""The branching-coalescing block-counting chain R_t.

From state n the chain branches to n + 1 at rate ``alpha n``, makes a
Kingman pair merger n -> n - 1 at rate ``Lambda({0}) C(n, 2)``, and makes a
Lambda-merger n -> n - k + 1 at total rate ``phi(n)``.

Mergers are drawn in two stages. First a reproduction size x is drawn with
law proportional to ``P[Bin(n, x) >= 2] nu(dx)``, then k ~ Bin(n, x)
conditioned on k >= 2. Integrating x out recovers the rate
``C(n, k) lambda_{n,k}`` of each k. The x-stage uses rejection from the
proposal ``min(1, C(n, 2) x**2) nu(dx)``, which splits into Lambda on
(0, x_c) and nu on [x_c, 1] with ``x_c = C(n, 2)**-1/2`` and accepts with
probability at least ~0.4 for every n.
"""

from __future__ import annotations

import functools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ._rng import TAG_DUAL, Streams
from .errors import InvalidConfig
from .measure import CellTable, LambdaMeasure, kingman_of
from .rates import RateTable, alpha_star, binomial_brackets, compare_alpha, rate_integrals

__all__ = [
    "DualConfig", "DualPath", "DualEngine", "next_event", "simulate_dual",
    "dual_endpoints", "recurrence_probe", "RecurrenceSummary", "absorption_time_stats",
]

CHUNK = 8192
RECORD_MODES = ("full", "endpoint")


@dataclass(frozen=True)
class DualConfig:
    measure: LambdaMeasure
    alpha: float = 0.0
    n0: int = 1
    t_max: float = math.inf
    n_cap: int = 10 ** 6
    seed: int = 0
    record: str = "endpoint"

    def __post_init__(self):
        if int(self.n0) != self.n0 or self.n0 < 1:
            raise InvalidConfig(f"n0 must be a positive integer, got {self.n0}")
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            raise InvalidConfig(f"alpha must be finite and >= 0, got {self.alpha}")
        if self.n_cap <= self.n0:
            raise InvalidConfig(f"n_cap ({self.n_cap}) must exceed n0 ({self.n0})")
        if not self.t_max >= 0:
            raise InvalidConfig(f"t_max must be >= 0, got {self.t_max}")
        if math.isinf(self.t_max) and self.alpha > 0:
            raise InvalidConfig("an infinite horizon needs alpha = 0")
        if self.record not in RECORD_MODES:
            raise InvalidConfig(f"record must be one of {RECORD_MODES}, got {self.record!r}")


@dataclass
class DualPath:
    times: np.ndarray
    values: np.ndarray
    hit_one_time: float | None
    capped: bool

    @property
    def final(self) -> int:
        return int(self.values[-1])


class _MergerSampler:
    """Two-stage sampler for the merger size k out of n lineages."""

    def __init__(self, m: LambdaMeasure, n_cap: int):
        self.atom_x, self.atom_c = m.atoms()
        self.pieces = m.pieces()
        x_floor = 0.5 / math.sqrt(0.5 * n_cap * (n_cap - 1.0))
        self.lam_tables = []
        self.nu_tables = []
        for p in self.pieces:
            self.lam_tables.append(CellTable(p.density, p.lo, p.hi))
            lo = max(p.lo, x_floor)
            self.nu_tables.append(
                CellTable(lambda x, y, p=p: p.density(x, y) / (x * x), lo, p.hi) if lo < p.hi else None)

    def _proposal_masses(self, n):
        """Masses of every proposal part, shape (rows, parts), and x_c."""
        pairs = 0.5 * n * (n - 1.0)
        x_c = np.minimum(1.0 / np.sqrt(pairs), 1.0)
        cols = []
        if self.atom_x.size:
            xa = self.atom_x[None, :]
            cols.append(self.atom_c[None, :] * np.minimum(1.0, pairs[:, None] * xa * xa) / (xa * xa))
        for p, lt, nt in zip(self.pieces, self.lam_tables, self.nu_tables):
            cut = np.clip(x_c, p.lo, p.hi)
            lam_below = lt.total - lt.tail(cut)
            nu_above = nt.tail(np.maximum(cut, nt.lo)) if nt is not None else np.zeros_like(cut)
            cols.append((p.weight * pairs * np.maximum(lam_below, 0.0))[:, None])
            cols.append((p.weight * nu_above)[:, None])
        return np.hstack(cols), x_c

    def sample_x(self, n, streams, rows):
        """Draw x with law proportional to ``P[Bin(n, x) >= 2] nu(dx)``, one per row."""
        n = np.asarray(n, dtype=float)
        out = np.empty(n.size)
        pending = np.arange(n.size)
        n_atoms = self.atom_x.size
        while pending.size:
            nn = n[pending]
            masses, x_c = self._proposal_masses(nn)
            cum = np.cumsum(masses, axis=1)
            u = streams.uniform(rows[pending]) * cum[:, -1]
            part = np.minimum((cum <= u[:, None]).sum(axis=1), cum.shape[1] - 1)
            v = streams.uniform(rows[pending])
            x = np.empty(nn.size)
            is_atom = part < n_atoms
            x[is_atom] = self.atom_x[part[is_atom]]
            for j, (p, lt, nt) in enumerate(zip(self.pieces, self.lam_tables, self.nu_tables)):
                below = part == n_atoms + 2 * j
                if np.any(below):
                    cut = np.clip(x_c[below], p.lo, p.hi)
                    t_cut = lt.tail(cut)
                    x[below] = lt.invert_tail(t_cut + v[below] * (lt.total - t_cut))
                above = part == n_atoms + 2 * j + 1
                if np.any(above):
                    t_top = nt.tail(np.maximum(np.clip(x_c[above], p.lo, p.hi), nt.lo))
                    x[above] = nt.invert_tail(v[above] * t_top)
            ge2, _ = binomial_brackets(nn, x)
            bound = np.minimum(1.0, 0.5 * nn * (nn - 1.0) * x * x)
            accept = streams.uniform(rows[pending]) * bound <= ge2
            out[pending[accept]] = x[accept]
            pending = pending[~accept]
        return out

    @staticmethod
    def sample_k(n, x, streams, rows):
        """k ~ Binomial(n, x) conditioned on k >= 2."""
        n = np.asarray(n, dtype=float)
        x = np.asarray(x, dtype=float)
        k = np.empty(n.size)
        ge2, _ = binomial_brackets(n, x)
        big = ge2 >= 0.1
        idx = np.flatnonzero(big)
        while idx.size:
            draw = stats.binom.ppf(streams.uniform(rows[idx]), n[idx], x[idx])
            ok = draw >= 2
            k[idx[ok]] = draw[ok]
            idx = idx[~ok]
        idx = np.flatnonzero(~big)
        if idx.size:
            ni, xi = n[idx], x[idx]
            target = streams.uniform(rows[idx]) * ge2[idx]
            ratio = xi / (1.0 - xi)
            pmf = 0.5 * ni * (ni - 1.0) * xi * xi * np.exp((ni - 2.0) * np.log1p(-xi))
            cum = pmf.copy()
            kk = np.full(idx.size, 2.0)
            todo = (cum < target) & (kk < ni)
            while np.any(todo):
                pmf = np.where(todo, pmf * (ni - kk) / (kk + 1.0) * ratio, pmf)
                kk = np.where(todo, kk + 1.0, kk)
                cum = np.where(todo, cum + pmf, cum)
                todo = (cum < target) & (kk < ni)
            k[idx] = kk
        return k.astype(np.int64)


class DualEngine:
    """Event generator for the chain; shared, read-only after construction
    apart from the merger-rate cache, which only grows."""

    def __init__(self, measure: LambdaMeasure, alpha: float, n_cap: int = 10 ** 6,
                 rates: RateTable | None = None):
        self.measure = measure
        self.alpha = float(alpha)
        self.n_cap = int(n_cap)
        self.kingman = kingman_of(measure)
        self.atomic = measure.is_atomic
        self.merger = _MergerSampler(measure, self.n_cap)
        self._has_merger = bool(self.merger.atom_x.size or self.merger.pieces)
        self._phi = np.zeros(2)
        if not self.atomic:
            top = rates.n_max if rates is not None else 256
            self._extend(top)

    def _extend(self, top):
        ns = np.arange(top + 1)
        vals, _ = rate_integrals(self.measure, ns, include_kingman=False)
        self._phi = vals[0]

    def merger_rate(self, n):
        """phi(n) without the Kingman atom."""
        n = np.asarray(n, dtype=np.int64)
        if not self._has_merger:
            return np.zeros(n.shape)
        if self.atomic:
            ge2, _ = binomial_brackets(n[:, None].astype(float), self.merger.atom_x[None, :])
            return (ge2 * self.merger.atom_c / self.merger.atom_x ** 2).sum(axis=1)
        top = int(n.max()) if n.size else 0
        if top >= self._phi.size:
            self._extend(max(top, 2 * (self._phi.size - 1)))
        return self._phi[n]

    def step(self, n, streams, rows):
        """One event for each row: returns (waiting times, new states)."""
        n = np.asarray(n, dtype=np.int64)
        nf = n.astype(float)
        branch = self.alpha * nf
        pair = self.kingman * 0.5 * nf * (nf - 1.0)
        merge = self.merger_rate(n)
        total = branch + pair + merge
        with np.errstate(divide="ignore"):
            wait = np.where(total > 0, streams.exponential(rows) / np.where(total > 0, total, 1.0), np.inf)
        u = streams.uniform(rows) * total
        new = n.copy()
        is_branch = u < branch
        is_pair = ~is_branch & (u < branch + pair)
        is_merge = (total > 0) & ~is_branch & ~is_pair
        new[is_branch] += 1
        new[is_pair] -= 1
        if np.any(is_merge):
            idx = np.flatnonzero(is_merge)
            x = self.merger.sample_x(nf[idx], streams, rows[idx])
            k = self.merger.sample_k(nf[idx], x, streams, rows[idx])
            new[idx] = n[idx] - k + 1
        return wait, new

    def run(self, cfg: DualConfig, indices, record=False, stop_below=None):
        """Simulate replicates ``indices``; returns endpoint arrays (and an event log)."""
        streams = Streams(cfg.seed, indices, TAG_DUAL)
        R = len(streams)
        rows = np.arange(R)
        n = np.full(R, int(cfg.n0), dtype=np.int64)
        t = np.zeros(R)
        hit_one = np.where(n == 1, 0.0, np.nan)
        entered = np.where(n <= (stop_below or 0), 0.0, np.nan)
        capped = np.zeros(R, dtype=bool)
        alive = ~((n == 1) & (self.alpha == 0))
        log = [] if record else None
        while np.any(alive):
            idx = rows[alive]
            wait, new = self.step(n[idx], streams, idx)
            t_next = t[idx] + wait
            over = t_next > cfg.t_max
            if np.any(over):
                d = idx[over]
                t[d] = cfg.t_max
                alive[d] = False
            move = ~over
            j = idx[move]
            n[j] = new[move]
            t[j] = t_next[move]
            if record and j.size:
                log.append((j, t[j].copy(), n[j].copy()))
            first = j[(n[j] == 1) & np.isnan(hit_one[j])]
            hit_one[first] = t[first]
            if stop_below:
                first = j[(n[j] <= stop_below) & np.isnan(entered[j])]
                entered[first] = t[first]
            done = (n[j] == 1) & (self.alpha == 0)
            cap = n[j] >= self.n_cap
            capped[j[cap]] = True
            alive[j[done | cap]] = False
        return n, t, hit_one, capped, entered, log


@functools.lru_cache(maxsize=16)
def _engine_for(measure, alpha, n_cap):
    # measures are frozen dataclasses, so they can key the cache
    return DualEngine(measure, alpha, n_cap)


def next_event(n: int, rt: RateTable, rng, n_cap: int = 10 ** 6):
    """One transition from state n: ``(waiting_time, new_n)``.

    ``rng`` is a single-stream ``Streams`` object. The engine built from
    ``rt`` is cached on it.
    """
    engine = getattr(rt, "_dual_engine", None)
    if engine is None or engine.n_cap != n_cap:
        engine = DualEngine(rt.measure, rt.alpha, n_cap, rt)
        rt._dual_engine = engine
    wait, new = engine.step(np.array([n]), rng, np.array([0]))
    return float(wait[0]), int(new[0])


def simulate_dual(cfg: DualConfig, replicate: int = 0, engine: DualEngine | None = None) -> DualPath:
    """One path of R on [0, t_max] from the stream ``(cfg.seed, replicate)``."""
    engine = engine or _engine_for(cfg.measure, cfg.alpha, cfg.n_cap)
    n, t, hit_one, capped, _, log = engine.run(cfg, [replicate], record=cfg.record == "full")
    hit = None if np.isnan(hit_one[0]) else float(hit_one[0])
    if cfg.record == "full":
        times = np.concatenate([[0.0], [tt[0] for _, tt, _ in log]])
        values = np.concatenate([[cfg.n0], [nn[0] for _, _, nn in log]]).astype(np.int64)
        if t[0] > times[-1]:
            times = np.append(times, t[0])
            values = np.append(values, n[0])
    else:
        times = np.array([0.0, t[0]])
        values = np.array([cfg.n0, n[0]], dtype=np.int64)
    return DualPath(times, values, hit, bool(capped[0]))


def _run_chunks(engine, cfg, replicates, threads, stop_below=None):
    chunks = [np.arange(a, min(a + CHUNK, replicates)) for a in range(0, replicates, CHUNK)]

    def work(c):
        return engine.run(cfg, c, stop_below=stop_below)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(c) for c in chunks]
    return [np.concatenate([r[i] for r in results]) for i in range(5)]


def dual_endpoints(cfg: DualConfig, replicates: int, threads: int = 1,
                   engine: DualEngine | None = None):
    """Endpoint states, end times, first hitting times of 1 and capped flags."""
    if replicates < 1:
        raise InvalidConfig("replicates must be >= 1")
    engine = engine or _engine_for(cfg.measure, cfg.alpha, cfg.n_cap)
    n, t, hit, capped, _ = _run_chunks(engine, cfg, replicates, threads)
    return n, t, hit, capped


@dataclass(frozen=True)
class RecurrenceSummary:
    start: int
    n0: int
    return_fraction: float
    mean_return_time: float
    mean_endpoint: float
    median_endpoint: float
    fraction_above_start: float
    capped_fraction: float
    drift_sign: int
    behaviour: str  # "recurrent", "transient" or "unclear"
    alpha_class: str  # "below", "above" or "critical" against alpha*

    def as_dict(self):
        return dict(self.__dict__)


def recurrence_probe(cfg: DualConfig, replicates: int, threads: int = 1,
                     n_cap: int | None = None) -> RecurrenceSummary:
    """Start at ``4 n0`` and measure returns to [1, n0] before ``t_max``.

    ``n_cap`` defaults to ``max(1000, 25 * start)``; a capped path has
    escaped and counts as ending above the start.
    """
    if not math.isfinite(cfg.t_max):
        raise InvalidConfig("recurrence_probe needs a finite t_max")
    start = 4 * int(cfg.n0)
    cap = n_cap if n_cap is not None else max(1000, 25 * start)
    probe = DualConfig(cfg.measure, cfg.alpha, start, cfg.t_max, cap, cfg.seed, "endpoint")
    engine = _engine_for(cfg.measure, cfg.alpha, cap)
    n, _, _, capped, entered = _run_chunks(engine, probe, replicates, threads, stop_below=int(cfg.n0))
    returned = ~np.isnan(entered)
    frac = float(returned.mean())
    mean_rt = float(entered[returned].mean()) if returned.any() else math.nan
    above = float(np.mean((n > start) | capped))
    drift = int(np.sign(np.mean(n.astype(float) - start)))
    alpha_class = compare_alpha(cfg.alpha, alpha_star(cfg.measure))
    if alpha_class == "critical":
        behaviour = "unclear"  # null recurrence is possible here; report statistics only
    elif frac >= 0.9 and above < 0.5:
        behaviour = "recurrent"
    elif above >= 0.9 and frac < 0.5:
        behaviour = "transient"
    else:
        behaviour = "unclear"
    return RecurrenceSummary(start, int(cfg.n0), frac, mean_rt, float(n.mean()), float(np.median(n)),
                             above, float(capped.mean()), drift, behaviour, alpha_class)


def absorption_time_stats(measure: LambdaMeasure, n0: int, replicates: int, seed: int = 0,
                          threads: int = 1) -> tuple[float, float]:
    """Mean and standard error of the hitting time of 1 from n0 with no branching."""
    cfg = DualConfig(measure, 0.0, n0, math.inf, max(n0 + 1, 10 ** 6), seed)
    _, t, hit, _ = dual_endpoints(cfg, replicates, threads)
    return float(hit.mean()), float(hit.std(ddof=1) / math.sqrt(hit.size)) if hit.size > 1 else 0.0
