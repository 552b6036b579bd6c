"""Clamped, equally spaced B-spline bases.

Throughout the package ``order`` is the number of polynomial coefficients per
knot span, so ``order=1`` gives step functions, ``order=3`` quadratic and
``order=4`` cubic splines. A basis of order ``l`` with ``K`` interior knots has
dimension ``m = K + l``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .errors import InvalidDimensionError, InvalidIntervalError


@lru_cache(maxsize=64)
def gauss_legendre(n: int):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class SplineBasis:
    """Normalized (partition-of-unity) B-spline basis on ``interval``.

    With ``constant_first=True`` the first element is replaced by the sum of
    all elements, i.e. the constant function 1 on the interval; the span is
    unchanged.
    """

    order: int
    dim: int
    interval: tuple
    knots: np.ndarray = field(repr=False)
    constant_first: bool = False

    @property
    def a(self) -> float:
        return self.interval[0]

    @property
    def b(self) -> float:
        return self.interval[1]

    @property
    def n_interior(self) -> int:
        return self.dim - self.order

    @property
    def breakpoints(self) -> np.ndarray:
        """Distinct knots, i.e. the boundaries of the polynomial pieces."""
        return np.unique(self.knots)

    @property
    def span_width(self) -> float:
        return (self.b - self.a) / (self.n_interior + 1)

    def __call__(self, t) -> np.ndarray:
        return self.evaluate(t)

    def evaluate(self, t) -> np.ndarray:
        """Dense basis matrix of shape ``(len(t), dim)``; zero outside the interval."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        vals, first, inside = self.evaluate_local(t)
        out = np.zeros((t.size, self.dim))
        rows = np.nonzero(inside)[0]
        cols = first[inside][:, None] + np.arange(self.order)[None, :]
        out[rows[:, None], cols] = vals[inside]
        if self.constant_first:
            out[inside, 0] = 1.0
        return out

    def evaluate_local(self, t):
        """Nonzero values of the standard B-splines at ``t``.

        Returns ``(values, first, inside)`` where ``values[i, r]`` is the value
        of basis function ``first[i] + r``. Rows with ``inside[i] == False``
        are zero. The ``constant_first`` modification is *not* applied.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        l = self.order
        kn = self.knots
        inside = (t >= self.a) & (t <= self.b)
        tc = np.clip(t, self.a, self.b)
        # span s with kn[s] <= t < kn[s+1]; the right endpoint uses the last span
        s = np.searchsorted(kn, tc, side="right") - 1
        s = np.clip(s, l - 1, self.dim - 1)
        N = np.zeros((t.size, l))
        N[:, 0] = 1.0
        left = np.zeros((t.size, l))
        right = np.zeros((t.size, l))
        for jj in range(1, l):
            left[:, jj] = tc - kn[s + 1 - jj]
            right[:, jj] = kn[s + jj] - tc
            saved = np.zeros(t.size)
            for r in range(jj):
                temp = N[:, r] / (right[:, r + 1] + left[:, jj - r])
                N[:, r] = saved + right[:, r + 1] * temp
                saved = left[:, jj - r] * temp
            N[:, jj] = saved
        N[~inside] = 0.0
        return N, s - (l - 1), inside

    def integrals(self) -> np.ndarray:
        """Exact integrals of each basis element over the interval."""
        l = self.order
        kn = self.knots
        out = (kn[l:l + self.dim] - kn[:self.dim]) / l
        if self.constant_first:
            out = out.copy()
            out[0] = self.b - self.a
        return out

    def gram(self, weight: Optional[Callable] = None) -> np.ndarray:
        """Integral of ``phi phi^T`` (optionally weighted) over the interval.

        Unweighted products are piecewise polynomials of degree ``2(order-1)``
        and are integrated exactly by per-span Gauss-Legendre rules. A weight
        is integrated with a higher-order rule on the same spans.
        """
        n = self.order + 1 if weight is None else self.order + 12
        x, w = gauss_legendre(n)
        bp = self.breakpoints
        lo, hi = bp[:-1], bp[1:]
        pts = (lo[:, None] + (hi - lo)[:, None] * x[None, :]).ravel()
        wts = ((hi - lo)[:, None] * w[None, :]).ravel()
        if weight is not None:
            wts = wts * np.asarray(weight(pts), dtype=float)
        B = self.evaluate(pts)
        G = (B * wts[:, None]).T @ B
        return 0.5 * (G + G.T)


def make_basis(degree_l: int, dimension_m: int, interval) -> SplineBasis:
    """Build the clamped B-spline basis with equally spaced interior knots.

    Parameters
    ----------
    degree_l : int
        Spline order (1 = step functions, 4 = cubic).
    dimension_m : int
        Number of basis functions; ``dimension_m - degree_l`` interior knots.
    interval : (float, float)
        Domain ``[a1, a2]``.
    """
    degree_l = int(degree_l)
    dimension_m = int(dimension_m)
    if degree_l < 1:
        raise InvalidDimensionError(f"spline order must be >= 1, got {degree_l}")
    if dimension_m < degree_l:
        raise InvalidDimensionError(
            f"dimension {dimension_m} is smaller than the spline order {degree_l}")
    a1, a2 = float(interval[0]), float(interval[1])
    if not (math.isfinite(a1) and math.isfinite(a2)) or a1 >= a2:
        raise InvalidIntervalError(f"invalid interval [{a1}, {a2}]")
    K = dimension_m - degree_l
    interior = a1 + (a2 - a1) * np.arange(1, K + 1) / (K + 1)
    knots = np.concatenate([np.full(degree_l, a1), interior, np.full(degree_l, a2)])
    return SplineBasis(degree_l, dimension_m, (a1, a2), knots)


def constant_background_basis(m0: int, interval, degree_l: int = 4) -> SplineBasis:
    """Basis whose first element is the constant 1 and which spans the same
    space as ``make_basis(degree_l, m0, interval)``."""
    if int(m0) < 2:
        raise InvalidDimensionError(f"a constant-first basis needs m0 >= 2, got {m0}")
    base = make_basis(degree_l, m0, interval)
    return SplineBasis(base.order, base.dim, base.interval, base.knots, constant_first=True)


def eval_basis(basis: SplineBasis, t: float) -> np.ndarray:
    """Basis vector ``phi(t)``; all zeros when ``t`` lies outside the interval."""
    return basis.evaluate(np.array([t], dtype=float))[0]


def gram_matrix(basis: SplineBasis, weight: Optional[Callable] = None) -> np.ndarray:
    return basis.gram(weight)
