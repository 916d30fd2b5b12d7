"""Finite measures Lambda on [0, 1] and integrals against nu(dx) = x**-2 Lambda(dx).

Four shapes are supported: finite atom lists, unnormalised Beta densities,
piecewise-constant grid densities and depth-one mixtures of these. Any of
them may carry an extra atom at 0 (``kingman_mass``). That atom never enters
a nu-integral; the rate functions add its quadratic contribution explicitly.

Internally every measure is flattened into atoms, continuous ``Piece``
objects and the Kingman mass, so integration and sampling code only deals
with those three ingredients.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from . import _quad
from .errors import (InvalidIntegrand, InvalidMeasure, KingmanUnsupported,
                     ZeroMass)

__all__ = [
    "EstimateWithError", "LambdaMeasure", "AtomList", "Beta", "GridDensity",
    "Mixture", "dirac", "kingman", "beta", "total_mass", "integrate_nu",
    "laplace_exponent", "sample_weighted", "WeightedSampler",
    "measure_from_dict", "measure_to_dict", "parse_measure",
]

EXACT = "exact"
QUADRATURE = "quadrature"
MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class EstimateWithError:
    """A number with an absolute error: a bound (quadrature) or a standard error (MC)."""

    value: float
    error: float = 0.0
    kind: str = EXACT

    def __post_init__(self):
        if self.kind not in (EXACT, QUADRATURE, MONTE_CARLO):
            raise ValueError(f"unknown estimate kind {self.kind!r}")
        if not math.isfinite(self.error) or self.error < 0:
            raise ValueError(f"error must be finite and >= 0, got {self.error}")
        if self.kind == EXACT and self.error != 0:
            raise ValueError("exact estimates carry zero error")

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class Piece:
    """Continuous part ``weight * density(x, 1-x) dx`` supported on [lo, hi]."""

    lo: float
    hi: float
    weight: float
    density: Callable
    # Lambda((0, x)) for small x when lo == 0; used for truncated tails
    mass_below: Callable | None = None


class LambdaMeasure:
    """Base class. Subclasses are frozen dataclasses."""

    kingman_mass: float

    @property
    def kind(self) -> str:
        return type(self).__name__

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        return np.empty(0), np.empty(0)

    def pieces(self) -> list[Piece]:
        return []

    def _mass(self) -> tuple[float, bool]:
        raise NotImplementedError

    def log_jump_weights(self, n: int) -> np.ndarray:
        """log of C(n,k) * lambda_{n,k}, k = 2..n, without the Kingman atom."""
        raise NotImplementedError

    @property
    def is_atomic(self) -> bool:
        return not self.pieces()

    def _check_kingman(self):
        if not (self.kingman_mass >= 0 and math.isfinite(self.kingman_mass)):
            raise InvalidMeasure(f"kingman_mass must be finite and >= 0, got {self.kingman_mass}")


def _log_binom(n, k):
    return special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)


@dataclass(frozen=True)
class AtomList(LambdaMeasure):
    """Sum of point masses ``c_i * delta_{x_i}`` with ``x_i`` in (0, 1]."""

    atoms_: tuple = ()
    kingman_mass: float = 0.0

    def __post_init__(self):
        self._check_kingman()
        atoms = tuple((float(x), float(c)) for x, c in self.atoms_)
        for x, c in atoms:
            if not 0.0 < x <= 1.0:
                raise InvalidMeasure(f"atom location {x} outside (0, 1]")
            if not (c > 0 and math.isfinite(c)):
                raise InvalidMeasure(f"atom mass {c} must be positive and finite")
        object.__setattr__(self, "atoms_", atoms)
        if not atoms and self.kingman_mass <= 0:
            raise InvalidMeasure("measure has zero total mass")

    def atoms(self):
        if not self.atoms_:
            return np.empty(0), np.empty(0)
        xs, cs = zip(*self.atoms_)
        return np.array(xs), np.array(cs)

    def _mass(self):
        return sum(c for _, c in self.atoms_) + self.kingman_mass, True

    def log_jump_weights(self, n):
        k = np.arange(2, n + 1, dtype=float)
        out = np.full(k.shape, -np.inf)
        lb = _log_binom(n, k)
        for x, c in self.atoms_:
            if x == 1.0:
                term = np.where(k == n, math.log(c), -np.inf)
            else:
                term = math.log(c) + (k - 2) * math.log(x) + (n - k) * math.log1p(-x)
            out = np.logaddexp(out, lb + term)
        return out


@dataclass(frozen=True)
class Beta(LambdaMeasure):
    """Unnormalised Beta density ``x**(a-1) * (1-x)**(b-1)`` on (0, 1)."""

    a: float
    b: float
    kingman_mass: float = 0.0

    def __post_init__(self):
        self._check_kingman()
        if not (self.a > 0 and self.b > 0 and math.isfinite(self.a) and math.isfinite(self.b)):
            raise InvalidMeasure(f"Beta shapes must be positive, got a={self.a}, b={self.b}")

    def density(self, x, y):
        return np.power(x, self.a - 1.0) * np.power(y, self.b - 1.0)

    def pieces(self):
        a = self.a
        return [Piece(0.0, 1.0, 1.0, self.density, lambda x: np.power(x, a) / a)]

    def _mass(self):
        return float(special.beta(self.a, self.b)) + self.kingman_mass, True

    def log_jump_weights(self, n):
        k = np.arange(2, n + 1, dtype=float)
        return _log_binom(n, k) + special.betaln(self.a + k - 2, self.b + n - k)


@dataclass(frozen=True)
class GridDensity(LambdaMeasure):
    """Piecewise-constant density: ``density[i]`` on ``[breaks[i], breaks[i+1])``."""

    breaks: tuple
    density: tuple
    kingman_mass: float = 0.0

    def __post_init__(self):
        self._check_kingman()
        br = tuple(float(b) for b in self.breaks)
        de = tuple(float(d) for d in self.density)
        object.__setattr__(self, "breaks", br)
        object.__setattr__(self, "density", de)
        if len(br) != len(de) + 1 or len(de) == 0:
            raise InvalidMeasure("grid needs len(breaks) == len(density) + 1 >= 2")
        if br[0] < 0 or br[-1] > 1 or any(b1 <= b0 for b0, b1 in zip(br, br[1:])):
            raise InvalidMeasure("grid breaks must increase strictly inside [0, 1]")
        if any(not (d >= 0 and math.isfinite(d)) for d in de):
            raise InvalidMeasure("grid density values must be finite and >= 0")
        if self._mass()[0] <= 0:
            raise InvalidMeasure("measure has zero total mass")

    def pieces(self):
        out = []
        for lo, hi, d in zip(self.breaks, self.breaks[1:], self.density):
            if d > 0:
                out.append(Piece(lo, hi, d, _unit_density, (lambda x: x) if lo == 0 else None))
        return out

    def _mass(self):
        cells = sum(d * (hi - lo) for lo, hi, d in zip(self.breaks, self.breaks[1:], self.density))
        return cells + self.kingman_mass, False

    def log_jump_weights(self, n):
        k = np.arange(2, n + 1, dtype=float)
        a, b = k - 1, n - k + 1
        out = np.full(k.shape, -np.inf)
        for lo, hi, d in zip(self.breaks, self.breaks[1:], self.density):
            if d <= 0:
                continue
            lower = special.betainc(a, b, lo)
            upper = special.betainc(a, b, hi)
            # the complemented form is accurate when both ends sit in the upper tail
            cl, ch = special.betaincc(a, b, lo), special.betaincc(a, b, hi)
            diff = np.where(lower > 0.5, cl - ch, upper - lower)
            with np.errstate(divide="ignore"):
                term = math.log(d) + special.betaln(a, b) + np.log(np.maximum(diff, 0.0))
            out = np.logaddexp(out, term)
        return _log_binom(n, k) + out


def _unit_density(x, y):
    return np.ones_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Mixture(LambdaMeasure):
    """Weighted sum of non-mixture measures (nesting depth 1)."""

    components: tuple
    kingman_mass: float = 0.0

    def __post_init__(self):
        self._check_kingman()
        comps = tuple((float(w), m) for w, m in self.components)
        if not comps:
            raise InvalidMeasure("mixture needs at least one component")
        for w, m in comps:
            if not (w > 0 and math.isfinite(w)):
                raise InvalidMeasure(f"mixture weight {w} must be positive")
            if isinstance(m, Mixture):
                raise InvalidMeasure("mixtures cannot be nested")
            if not isinstance(m, LambdaMeasure):
                raise InvalidMeasure(f"component {m!r} is not a LambdaMeasure")
        object.__setattr__(self, "components", comps)
        inner = sum(w * m.kingman_mass for w, m in comps)
        object.__setattr__(self, "_inner_kingman", inner)

    @property
    def total_kingman(self):
        return self.kingman_mass + self._inner_kingman

    def atoms(self):
        xs, cs = [], []
        for w, m in self.components:
            x, c = m.atoms()
            xs.append(x)
            cs.append(w * c)
        return np.concatenate(xs), np.concatenate(cs)

    def pieces(self):
        out = []
        for w, m in self.components:
            for p in m.pieces():
                out.append(Piece(p.lo, p.hi, w * p.weight, p.density, p.mass_below))
        return out

    def _mass(self):
        total, exact = self.kingman_mass, True
        for w, m in self.components:
            v, e = m._mass()
            total += w * v
            exact = exact and e
        return total, exact

    def log_jump_weights(self, n):
        out = np.full(max(n - 1, 0), -np.inf)
        for w, m in self.components:
            out = np.logaddexp(out, math.log(w) + m.log_jump_weights(n))
        return out


def kingman_of(m: LambdaMeasure) -> float:
    """Total mass at 0, including the components of a mixture."""
    return m.total_kingman if isinstance(m, Mixture) else m.kingman_mass


def dirac(x: float, c: float = 1.0) -> AtomList:
    return AtomList(((x, c),))


def kingman(c: float = 1.0) -> AtomList:
    return AtomList((), kingman_mass=c)


def beta(a: float, b: float) -> Beta:
    return Beta(a, b)


# ---------------------------------------------------------------------------
# integrals


def total_mass(m: LambdaMeasure) -> EstimateWithError:
    value, exact = m._mass()
    if exact:
        return EstimateWithError(value, 0.0, EXACT)
    return EstimateWithError(value, 4 * np.finfo(float).eps * value, QUADRATURE)


def integrate_pieces(m: LambdaMeasure, h, *, check_left=True, check_right=True,
                     epsabs=_quad.EPSABS, epsrel=_quad.EPSREL):
    """Sum of ``weight * int h(x, y) density(x, y) dx`` over the continuous pieces."""
    value, error = 0.0, 0.0
    for p in m.pieces():
        v, e = _quad.integrate_interval(
            lambda x, y, p=p: h(x, y) * p.density(x, y), p.lo, p.hi,
            epsabs=epsabs, epsrel=epsrel, check_left=check_left, check_right=check_right)
        value += p.weight * v
        error += p.weight * e
    return value, error


def integrate_nu(m: LambdaMeasure, f: Callable, zero_order: int = 0, *,
                 complement: bool = False, epsabs: float = _quad.EPSABS,
                 epsrel: float = _quad.EPSREL) -> EstimateWithError:
    """Integrate ``f(x) x**-2 Lambda(dx)`` over (0, 1], excluding the atom at 0.

    ``zero_order`` is the caller's promise that ``f(x) = O(x**zero_order)``
    near 0; with ``zero_order >= 2`` the left tail needs no divergence test.
    With ``complement=True`` ``f`` is called as ``f(x, 1 - x)``.
    Raises DivergentIntegral when an endpoint tail keeps growing.
    """
    call = f if complement else (lambda x, y: f(x))
    xs, cs = m.atoms()
    atom_sum = float(sum(c * call(x, 1.0 - x) / (x * x) for x, c in zip(xs, cs)))
    if math.isnan(atom_sum):
        raise InvalidIntegrand("integrand is NaN at an atom")
    if m.is_atomic:
        return EstimateWithError(atom_sum, 0.0, EXACT)
    v, e = integrate_pieces(m, lambda x, y: call(x, y) / (x * x),
                            check_left=zero_order < 2, epsabs=epsabs, epsrel=epsrel)
    return EstimateWithError(atom_sum + v, e, QUADRATURE)


def laplace_exponent(m: LambdaMeasure, q: float) -> EstimateWithError:
    """Laplace exponent ``int [1 - (1-x)**q] nu(dx)`` of the dust subordinator."""
    if q < 0 or not math.isfinite(q):
        raise ValueError(f"q must be finite and >= 0, got {q}")
    if kingman_of(m) > 0:
        raise KingmanUnsupported("the subordinator representation needs Lambda({0}) = 0")
    if q == 0:
        return EstimateWithError(0.0, 0.0, EXACT)

    def bracket(x, y):
        if y == 0.0:
            return 1.0
        # log1p keeps the bracket ~ q x alive where 1 - x rounds to 1
        return -math.expm1(q * (math.log1p(-x) if x < 0.5 else math.log(y)))

    return integrate_nu(m, bracket, zero_order=1, complement=True)


# ---------------------------------------------------------------------------
# tabulated sampling


def _cell_edges(lo, hi, floor=1e-30, top=1e-16, ratio=1.01):
    """Cell edges (x, 1-x) on [lo, hi], geometric towards both ends of [0, 1]."""
    j_left = int(math.ceil(math.log(0.5 / floor) / math.log(ratio)))
    left = 0.5 * ratio ** -np.arange(j_left + 1, dtype=float)
    j_right = int(math.ceil(math.log(0.5 / top) / math.log(ratio)))
    right_y = 0.5 * ratio ** -np.arange(1, j_right + 1, dtype=float)
    xs = np.concatenate([left[::-1], 1.0 - right_y])
    ys = np.concatenate([1.0 - left[::-1], right_y])
    keep = (xs > lo) & (xs < hi)
    xs, ys = xs[keep], ys[keep]
    x_edges = np.concatenate([[lo], xs, [hi]])
    y_edges = np.concatenate([[1.0 - lo], ys, [1.0 - hi]])
    return x_edges, y_edges


class CellTable:
    """Inverse-tail table of a nonnegative density ``h(x, y)`` on [lo, hi].

    Cell masses come from 8-point Gauss-Legendre; within a cell the density is
    taken linear between the endpoint values, which fixes the within-cell
    inverse CDF. Masses are accumulated from the top so that measures with a
    huge mass near 0 keep full precision on upper subintervals.
    """

    def __init__(self, h, lo, hi, floor=1e-30, ratio=1.01):
        x, y = _cell_edges(lo, hi, floor=floor, ratio=ratio)
        width = np.where(x[:-1] < 0.5, np.diff(x), -np.diff(y))
        nx = x[:-1, None] + width[:, None] * _quad.GL_NODES[None, :]
        ny = y[:-1, None] - width[:, None] * _quad.GL_NODES[None, :]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            vals = np.asarray(h(nx, ny), dtype=float)
            ends = np.asarray(h(x, y), dtype=float)
        if np.any(np.isnan(vals)) or np.any(vals < 0):
            raise ValueError("sampling density must be nonnegative")
        mass = width * (vals @ _quad.GL_WEIGHTS)
        mean = np.where(width > 0, mass / np.where(width > 0, width, 1.0), 0.0)
        d0, d1 = ends[:-1].copy(), ends[1:].copy()
        bad0, bad1 = ~np.isfinite(d0), ~np.isfinite(d1)
        d0[bad0] = mean[bad0]
        d1[bad1] = mean[bad1]
        self.x, self.y, self.width, self.mass = x, y, width, mass
        self.d0, self.d1 = d0, d1
        self.tails = np.concatenate([np.cumsum(mass[::-1])[::-1], [0.0]])
        self.total = float(self.tails[0])
        self.lo, self.hi = x[0], x[-1]

    def _frac_below(self, i, s):
        d0, d1 = self.d0[i], self.d1[i]
        avg = 0.5 * (d0 + d1)
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = (d0 * s + 0.5 * (d1 - d0) * s * s) / avg
        return np.where(avg > 0, frac, s)

    def tail(self, x):
        """Mass of [x, hi]."""
        x = np.clip(np.asarray(x, dtype=float), self.lo, self.hi)
        i = np.clip(np.searchsorted(self.x, x, side="right") - 1, 0, len(self.mass) - 1)
        s = np.clip((x - self.x[i]) / np.where(self.width[i] > 0, self.width[i], 1.0), 0, 1)
        return self.tails[i + 1] + self.mass[i] * (1.0 - self._frac_below(i, s))

    def invert_tail(self, v):
        """The point x with ``tail(x) == v`` for ``0 < v <= total``."""
        v = np.asarray(v, dtype=float)
        # tails is decreasing; cell i holds v in (tails[i+1], tails[i]]
        i = len(self.mass) - np.searchsorted(self.tails[::-1], v, side="left")
        i = np.clip(i, 0, len(self.mass) - 1)
        m = self.mass[i]
        with np.errstate(invalid="ignore", divide="ignore"):
            q = 1.0 - np.where(m > 0, (v - self.tails[i + 1]) / m, 0.5)
        q = np.clip(q, 0.0, 1.0)
        d0, d1 = self.d0[i], self.d1[i]
        avg = 0.5 * (d0 + d1)
        a = 0.5 * (d1 - d0)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = 2 * q * avg / (d0 + np.sqrt(np.maximum(d0 * d0 + 4 * a * q * avg, 0.0)))
        s = np.where(avg > 0, s, q)
        s = np.clip(np.nan_to_num(s, nan=q), 0.0, 1.0)
        return np.where(self.x[i] < 0.5, self.x[i] + s * self.width[i],
                        1.0 - (self.y[i] - s * self.width[i]))


def _vectorize_weight(weight):
    if weight is None:
        return lambda x: 1.0

    def w(x):
        out = weight(x)
        if np.ndim(out) == 0 and np.ndim(x) > 0:
            # scalar-only callables
            out = np.vectorize(weight, otypes=[float])(x)
        return out
    return w


class WeightedSampler:
    """Draws from ``weight(x) nu(dx)`` restricted to [lower, upper] within (0, 1].

    Atoms are sampled exactly; continuous pieces through a CellTable. Build
    once and reuse: construction is the expensive part.
    """

    def __init__(self, m: LambdaMeasure, weight: Callable | None = None,
                 lower: float = 0.0, upper: float = 1.0, floor: float = 1e-30):
        if not 0.0 <= lower < upper <= 1.0:
            raise ValueError(f"bad sampling range [{lower}, {upper}]")
        w = _vectorize_weight(weight)
        xs, cs = m.atoms()
        sel = (xs >= lower) & (xs <= upper)
        xs, cs = xs[sel], cs[sel]
        aw = np.asarray(cs * np.broadcast_to(w(xs), xs.shape) / xs ** 2, dtype=float) if xs.size else np.empty(0)
        if np.any(aw < 0):
            raise ValueError("weight must be nonnegative")
        self.atom_x = xs
        self.atom_cum = np.cumsum(aw)
        masses = [float(aw.sum())]
        self.tables = []
        for p in m.pieces():
            lo, hi = max(p.lo, lower), min(p.hi, upper)
            if lo >= hi:
                continue

            def h(x, y, p=p):
                return np.broadcast_to(w(x), np.shape(x)) * p.density(x, y) / (x * x)

            if lo == 0.0:
                # refuse silently truncating a non-integrable singularity at 0
                _quad.integrate_interval(lambda x, y: float(h(np.array(x), np.array(y))),
                                         0.0, hi, check_right=False)
            table = CellTable(h, lo, hi, floor=floor)
            self.tables.append(table)
            masses.append(p.weight * table.total)
        self.part_cum = np.cumsum(masses)
        self.mass = float(self.part_cum[-1])
        if not self.mass > 0:
            raise ZeroMass("weighted measure has zero mass on the sampling range")

    def sample(self, u1, u2) -> np.ndarray:
        """Map two arrays of uniforms on (0, 1) to samples."""
        u1 = np.asarray(u1, dtype=float)
        u2 = np.asarray(u2, dtype=float)
        part = np.searchsorted(self.part_cum, u1 * self.mass, side="right")
        part = np.minimum(part, len(self.part_cum) - 1)
        out = np.empty(u1.shape)
        if self.atom_x.size:
            sel = part == 0
            if np.any(sel):
                j = np.searchsorted(self.atom_cum, u2[sel] * self.atom_cum[-1], side="right")
                out[sel] = self.atom_x[np.minimum(j, self.atom_x.size - 1)]
        for i, table in enumerate(self.tables, start=1):
            sel = part == i
            if np.any(sel):
                out[sel] = table.invert_tail(u2[sel] * table.total)
        return out


def _uniform_source(rng):
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    if isinstance(rng, np.random.Generator):
        return lambda size: rng.random(size)
    if hasattr(rng, "uniform"):
        # lambdawf._rng.Streams: one stream, draw sequentially
        return lambda size: np.array([rng.uniform()[0] for _ in range(int(np.prod(size or 1)))]).reshape(size or ())
    raise TypeError(f"cannot draw uniforms from {rng!r}")


def sample_weighted(m: LambdaMeasure, weight: Callable | None, rng=None,
                    size=None, lower: float = 0.0):
    """Sample ``x`` with law proportional to ``weight(x) nu(dx)`` on [lower, 1].

    ``rng`` is a numpy Generator, an integer seed, or a ``Streams`` object;
    the result is deterministic given it.
    """
    sampler = WeightedSampler(m, weight, lower=lower)
    draw = _uniform_source(rng)
    shape = () if size is None else size
    u1 = np.asarray(draw(shape))
    u2 = np.asarray(draw(shape))
    out = sampler.sample(u1, u2)
    return float(out) if size is None else out


# ---------------------------------------------------------------------------
# text formats

_SCHEMA = {
    "dirac": {"x", "c"},
    "atoms": {"atoms"},
    "beta": {"a", "b"},
    "kingman": {"c"},
    "grid": {"breaks", "density"},
    "mixture": {"components"},
}


def measure_from_dict(d: dict) -> LambdaMeasure:
    """Build a measure from its JSON object form; unknown keys are errors."""
    if not isinstance(d, dict) or "type" not in d:
        raise InvalidMeasure(f"measure must be a JSON object with a 'type' key: {d!r}")
    kind = d["type"]
    if kind not in _SCHEMA:
        raise InvalidMeasure(f"unknown measure type {kind!r}")
    allowed = _SCHEMA[kind] | {"type", "kingman_mass"}
    extra = set(d) - allowed
    if extra:
        raise InvalidMeasure(f"unknown keys for {kind!r} measure: {sorted(extra)}")
    missing = _SCHEMA[kind] - set(d) - ({"c"} if kind == "dirac" else set())
    if missing:
        raise InvalidMeasure(f"missing keys for {kind!r} measure: {sorted(missing)}")
    km = float(d.get("kingman_mass", 0.0))
    try:
        if kind == "dirac":
            return AtomList(((float(d["x"]), float(d.get("c", 1.0))),), kingman_mass=km)
        if kind == "atoms":
            return AtomList(tuple((float(x), float(c)) for x, c in d["atoms"]), kingman_mass=km)
        if kind == "beta":
            return Beta(float(d["a"]), float(d["b"]), kingman_mass=km)
        if kind == "kingman":
            return AtomList((), kingman_mass=float(d["c"]) + km)
        if kind == "grid":
            return GridDensity(tuple(d["breaks"]), tuple(d["density"]), kingman_mass=km)
        comps = []
        for item in d["components"]:
            if set(item) - {"weight", "measure"}:
                raise InvalidMeasure(f"unknown keys in mixture component: {sorted(set(item))}")
            comps.append((float(item["weight"]), measure_from_dict(item["measure"])))
        return Mixture(tuple(comps), kingman_mass=km)
    except (TypeError, KeyError) as exc:
        raise InvalidMeasure(f"malformed {kind!r} measure: {exc}") from exc


def measure_to_dict(m: LambdaMeasure) -> dict:
    if isinstance(m, AtomList):
        if not m.atoms_:
            return {"type": "kingman", "c": m.kingman_mass}
        if len(m.atoms_) == 1:
            (x, c), = m.atoms_
            d = {"type": "dirac", "x": x, "c": c}
        else:
            d = {"type": "atoms", "atoms": [list(a) for a in m.atoms_]}
    elif isinstance(m, Beta):
        d = {"type": "beta", "a": m.a, "b": m.b}
    elif isinstance(m, GridDensity):
        d = {"type": "grid", "breaks": list(m.breaks), "density": list(m.density)}
    elif isinstance(m, Mixture):
        d = {"type": "mixture",
             "components": [{"weight": w, "measure": measure_to_dict(c)} for w, c in m.components]}
    else:
        raise TypeError(f"cannot serialise {m!r}")
    if m.kingman_mass:
        d["kingman_mass"] = m.kingman_mass
    return d


def parse_measure(text: str) -> LambdaMeasure:
    """Parse shorthand (``dirac:x:c``, ``beta:a:b``, ``kingman:c``) or a JSON object."""
    text = text.strip()
    if text.startswith("{"):
        try:
            return measure_from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise InvalidMeasure(f"bad measure JSON: {exc}") from exc
    parts = text.split(":")
    kind, args = parts[0].lower(), parts[1:]
    try:
        vals = [float(a) for a in args]
    except ValueError as exc:
        raise InvalidMeasure(f"bad numbers in measure shorthand {text!r}") from exc
    if kind == "dirac" and len(vals) in (1, 2):
        return dirac(vals[0], vals[1] if len(vals) == 2 else 1.0)
    if kind == "beta" and len(vals) == 2:
        return Beta(*vals)
    if kind == "kingman" and len(vals) in (0, 1):
        return kingman(vals[0] if vals else 1.0)
    raise InvalidMeasure(f"cannot parse measure shorthand {text!r}")
