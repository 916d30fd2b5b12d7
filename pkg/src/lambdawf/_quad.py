"""Adaptive quadrature on sub-intervals of [0, 1] with endpoint substitution.

Integrands take two arguments ``h(x, y)`` where ``y = 1 - x`` is supplied
separately so that factors like ``log(1 - x)`` or ``(1 - x)**(b - 1)`` keep
full precision next to the right endpoint.

Near 0 the substitution ``x = exp(-t)`` is used, near 1 ``1 - x = exp(-s)``.
The transformed tail is integrated over doubling windows; a tail whose
partial integral keeps growing by more than ``growth`` over
``DIVERGENCE_STEPS`` successive windows is declared divergent.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import integrate

from .errors import DivergentIntegral, InvalidIntegrand

EPSABS = 1e-10
EPSREL = 1e-8
GROWTH = 1.5
DIVERGENCE_STEPS = 3
# x = 1e-12, 1e-24, 1e-48, 1e-96, 1e-150; x**2 stays representable
_WINDOWS = (27.631021115928547, 55.26204223185709, 110.52408446371419,
            221.04816892742838, 345.38776394910684)


def _call(h, x, y):
    v = float(h(x, y))
    if math.isnan(v):
        raise InvalidIntegrand(f"integrand is NaN at x={x!r}")
    return v


def _quad(fun, a, b, epsabs, epsrel):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(fun, a, b, epsabs=epsabs, epsrel=epsrel, limit=200)
    return val, err


def _tail(fun, t0, epsabs, epsrel, check, growth, side):
    """Integrate ``fun`` over [t0, inf) in windows; return (value, error)."""
    edges = [t0] + [w for w in _WINDOWS if w > t0 + 1.0]
    total, err = 0.0, 0.0
    partial = []
    for a, b in zip(edges[:-1], edges[1:]):
        piece, e = _quad(fun, a, b, epsabs, epsrel)
        total += piece
        err += e
        partial.append(total)
        if len(partial) >= 2 and abs(piece) <= max(epsabs, epsrel * abs(total)):
            return total, err
        if check and len(partial) > DIVERGENCE_STEPS:
            recent = [abs(p) for p in partial[-DIVERGENCE_STEPS - 1:]]
            if all(r0 > 0 and r1 > growth * r0 for r0, r1 in zip(recent[:-1], recent[1:])):
                raise DivergentIntegral(
                    f"integral diverges at x={side}", endpoint=side, partial_sums=partial)
    # ran out of windows: slowly convergent, report the last window as error
    if check and len(partial) >= 2:
        last = abs(partial[-1] - partial[-2])
        err += last
    return total, err


def integrate_interval(h, lo, hi, *, epsabs=EPSABS, epsrel=EPSREL,
                       check_left=True, check_right=True, growth=GROWTH):
    """Integrate ``h(x, 1 - x)`` over ``[lo, hi]`` with ``0 <= lo < hi <= 1``.

    Returns ``(value, abs_error)``. Raises DivergentIntegral when an
    endpoint tail keeps growing and InvalidIntegrand on NaN.
    """
    if not 0.0 <= lo < hi <= 1.0:
        raise ValueError(f"bad interval [{lo}, {hi}]")
    value, error = 0.0, 0.0
    a, b = lo, hi
    if lo == 0.0:
        mid = min(hi, 0.5)

        def left(t):
            x = math.exp(-t)
            return _call(h, x, -math.expm1(-t)) * x

        v, e = _tail(left, -math.log(mid), epsabs, epsrel, check_left, growth, 0.0)
        value, error = value + v, error + e
        a = mid
    if hi == 1.0 and a < 1.0:
        mid = max(a, 0.5)

        def right(s):
            y = math.exp(-s)
            return _call(h, -math.expm1(-s), y) * y

        v, e = _tail(right, -math.log1p(-mid), epsabs, epsrel, check_right, growth, 1.0)
        value, error = value + v, error + e
        b = mid
    if a < b:
        v, e = _quad(lambda x: _call(h, x, 1.0 - x), a, b, epsabs, epsrel)
        value, error = value + v, error + e
    return value, error


# Gauss-Legendre rule reused for vectorised cell integration
GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(8)
GL_NODES = 0.5 * (GL_NODES + 1.0)
GL_WEIGHTS = 0.5 * GL_WEIGHTS
