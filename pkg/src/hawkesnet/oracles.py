"""Slow reference implementations used only by the test suite.

Nothing here is imported by the library modules. B-splines are evaluated
from the recursive definition, integrals are taken piece by piece between all
breakpoints, and the penalized problem is solved by generic methods that do
not share code with the block coordinate descent.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Optional, Sequence

import numpy as np
from numba import njit


# -- B-splines from the definition ------------------------------------------------

def _bspline(knots: np.ndarray, i: int, order: int, x: float, right: float) -> float:
    """Value of the ``i``-th normalized B-spline of ``order`` at ``x`` (Cox-de Boor)."""
    if order == 1:
        lo, hi = knots[i], knots[i + 1]
        if lo <= x < hi:
            return 1.0
        # the last nonempty span is closed on the right
        if x == right and hi == right and lo < hi:
            return 1.0
        return 0.0
    out = 0.0
    d1 = knots[i + order - 1] - knots[i]
    if d1 > 0:
        out += (x - knots[i]) / d1 * _bspline(knots, i, order - 1, x, right)
    d2 = knots[i + order] - knots[i + 1]
    if d2 > 0:
        out += (knots[i + order] - x) / d2 * _bspline(knots, i + 1, order - 1, x, right)
    return out


def reference_basis(basis, x: float) -> np.ndarray:
    """``phi(x)`` by the recursive definition; zero outside the interval."""
    a, b = basis.interval
    out = np.zeros(basis.dim)
    if x < a or x > b:
        return out
    for i in range(basis.dim):
        out[i] = _bspline(basis.knots, i, basis.order, x, b)
    if basis.constant_first:
        out[0] = 1.0
    return out


def reference_basis_matrix(basis, x) -> np.ndarray:
    """Cox-de Boor recursion on an array of points; rows are points.

    Same definition as :func:`reference_basis`, written level by level so that
    dense quadrature over millions of points stays practical.
    """
    x = np.asarray(x, dtype=float)
    kn = np.asarray(basis.knots, dtype=float)
    a, b = basis.interval
    n0 = len(kn) - 1
    B = np.zeros((x.size, n0))
    for i in range(n0):
        lo, hi = kn[i], kn[i + 1]
        if hi > lo:
            B[:, i] = (x >= lo) & (x < hi)
            if hi == b:
                B[:, i] += (x == b)
    for order in range(2, basis.order + 1):
        n = n0 - order + 1
        nb = np.zeros((x.size, n))
        for i in range(n):
            d1 = kn[i + order - 1] - kn[i]
            if d1 > 0:
                nb[:, i] += (x - kn[i]) / d1 * B[:, i]
            d2 = kn[i + order] - kn[i + 1]
            if d2 > 0:
                nb[:, i] += (kn[i + order] - x) / d2 * B[:, i + 1]
        B = nb
    B[(x < a) | (x > b)] = 0.0
    if basis.constant_first:
        B[:, 0] = np.where((x >= a) & (x <= b), 1.0, 0.0)
    return B


# -- quadrature ---------------------------------------------------------------------

def trapezoid_weights(interval, n_points: int):
    """Nodes and weights of the composite trapezoid rule."""
    a, b = float(interval[0]), float(interval[1])
    x = np.linspace(a, b, int(n_points))
    w = np.full(x.size, (b - a) / (n_points - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return x, w


def dense_quadrature(f: Callable, interval, n_points: int) -> float:
    """Composite trapezoid rule with ``n_points`` equally spaced nodes."""
    x, w = trapezoid_weights(interval, n_points)
    y = np.asarray(f(x), dtype=float)
    return float(w @ y) if y.ndim == 1 else w @ y


def dense_gram(basis, n_points: int = 1_000_001, weight: Optional[Callable] = None) -> np.ndarray:
    """``int phi phi^T (weight)`` by the trapezoid rule."""
    x, w = trapezoid_weights(basis.interval, n_points)
    if weight is not None:
        w = w * weight(x)
    out = np.zeros((basis.dim, basis.dim))
    for s in range(0, x.size, 200_000):
        P = reference_basis_matrix(basis, x[s:s + 200_000])
        out += P.T @ (w[s:s + 200_000, None] * P)
    return out


def _gauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _psi_reference(times, basis0, basis1, t: float) -> np.ndarray:
    """``Psi(t)`` by summing over every event of every node (``u < t``)."""
    parts = [reference_basis(basis0, t)]
    for ev in times:
        acc = np.zeros(basis1.dim)
        for u in ev:
            if u < t and t - u <= basis1.b:
                acc += reference_basis(basis1, t - u)
        parts.append(acc)
    return np.concatenate(parts)


def _all_breakpoints(times, basis0, basis1, T: float) -> np.ndarray:
    cuts = [np.unique(basis0.knots)]
    k1 = np.unique(basis1.knots)
    for ev in times:
        for u in ev:
            cuts.append(u + k1)
    c = np.unique(np.concatenate(cuts))
    return np.unique(np.clip(np.concatenate([c, [0.0, T]]), 0.0, T))


def naive_design(events, basis0, basis1, n_gauss: Optional[int] = None):
    """``alpha`` (``p x D``) and ``G`` by brute force.

    ``G`` integrates ``Psi Psi^T`` with a Gauss rule on every interval between
    consecutive breakpoints (event times shifted by all knots), where the
    integrand is a polynomial.
    """
    T = events.horizon_T
    times = [np.asarray(t) for t in events.times]
    n = n_gauss or (basis0.order + basis1.order)
    x, w = _gauss(n)
    cuts = _all_breakpoints(times, basis0, basis1, T)
    D = basis0.dim + len(times) * basis1.dim
    G = np.zeros((D, D))
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        for xi, wi in zip(x, w):
            v = _psi_reference(times, basis0, basis1, lo + (hi - lo) * xi)
            G += (hi - lo) * wi * np.outer(v, v)
    alpha = np.zeros((len(times), D))
    for j, ev in enumerate(times):
        for t in ev:
            alpha[j] += _psi_reference(times, basis0, basis1, t)
    return alpha / T, G / T


def naive_loss(events, basis0, basis1, beta, node: Optional[int] = None,
               n_gauss: Optional[int] = None) -> float:
    """``(1/T) sum_j [ int psi_j^2 dt - 2 sum_{t in N_j} psi_j(t) ]`` by brute force.

    ``beta`` is ``(p, D)`` (or ``(D,)`` together with ``node``). ``psi_j`` is
    evaluated by summing over every event, and the square is integrated
    exactly between breakpoints.
    """
    T = events.horizon_T
    times = [np.asarray(t) for t in events.times]
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    nodes = [node] if node is not None else list(range(len(times)))
    if node is not None and beta.shape[0] == 1:
        beta = np.repeat(beta, len(times), axis=0)
    n = n_gauss or (basis0.order + basis1.order)
    x, w = _gauss(n)
    cuts = _all_breakpoints(times, basis0, basis1, T)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        for xi, wi in zip(x, w):
            v = _psi_reference(times, basis0, basis1, lo + (hi - lo) * xi)
            for j in nodes:
                total += (hi - lo) * wi * float(v @ beta[j]) ** 2
    for j in nodes:
        for t in times[j]:
            total -= 2.0 * float(_psi_reference(times, basis0, basis1, t) @ beta[j])
    return total / T


# -- penalized problem -----------------------------------------------------------------

def penalized_objective(alpha, G, eta, m0, m1, beta) -> float:
    """``-2 beta^T alpha + beta^T G beta + eta sum_k sqrt(beta_k^T G_kk beta_k)``."""
    beta = np.asarray(beta, dtype=float)
    val = -2.0 * beta @ alpha + beta @ G @ beta
    p = (len(alpha) - m0) // m1
    for k in range(p):
        s = slice(m0 + k * m1, m0 + (k + 1) * m1)
        q = beta[s] @ G[s, s] @ beta[s]
        val += eta * math.sqrt(max(q, 0.0))
    return float(val)


@njit(cache=True)
def _subgradient_loop(c, M, eta, m1, iters):
    """Subgradient descent on ``|g|^2 - 2 c^T g + eta sum_k |M_k g|``.

    The smooth part has unit condition number, so steps ``1 / (k + 1)``
    (strong convexity 2) give an ``O(1/k)`` rate for the weighted average.
    """
    D = c.shape[0]
    p = M.shape[0] // m1
    x = np.zeros(D)
    avg = np.zeros(D)
    best = np.zeros(D)
    best_val = np.inf
    wsum = 0.0
    g = np.empty(D)
    Mx = np.empty(M.shape[0])
    for it in range(iters):
        val = 0.0
        for i in range(D):
            val += x[i] * x[i] - 2.0 * c[i] * x[i]
            g[i] = 2.0 * (x[i] - c[i])
        for r in range(M.shape[0]):
            acc = 0.0
            for i in range(D):
                acc += M[r, i] * x[i]
            Mx[r] = acc
        for k in range(p):
            q = 0.0
            for a in range(m1):
                q += Mx[k * m1 + a] ** 2
            if q > 0.0:
                nr = math.sqrt(q)
                val += eta * nr
                for a in range(m1):
                    w = eta * Mx[k * m1 + a] / nr
                    for i in range(D):
                        g[i] += w * M[k * m1 + a, i]
        if val < best_val:
            best_val = val
            best[:] = x
        step = 1.0 / (it + 1.0)
        wt = it + 1.0
        wsum += wt
        for i in range(D):
            avg[i] += (wt / wsum) * (x[i] - avg[i])
            x[i] -= step * g[i]
    return best, avg


def _restricted_newton(alpha, G, eta, m0, m1, support, x0, iters=60):
    """Minimize the objective restricted to the background and ``support``.

    The penalty is replaced by ``eta sum_k sqrt(q_k + eps^2)``, which is
    smooth and strictly convex, and damped Newton is run for a decreasing
    sequence of ``eps``. Groups whose restricted optimum is zero shrink to
    ``O(eps)``.
    """
    idx = list(range(m0))
    for k in support:
        idx.extend(range(m0 + k * m1, m0 + (k + 1) * m1))
    idx = np.array(idx, dtype=int)
    x = np.zeros(len(alpha))
    x[idx] = np.asarray(x0, dtype=float)[idx]
    slices = [slice(m0 + k * m1, m0 + (k + 1) * m1) for k in support]

    def fs(z, eps):
        val = -2.0 * z @ alpha + z @ G @ z
        for s in slices:
            val += eta * math.sqrt(z[s] @ G[s, s] @ z[s] + eps * eps)
        return val

    for eps in 10.0 ** -np.arange(0, 13):
        f0 = fs(x, eps)
        for _ in range(iters):
            grad = 2.0 * (G @ x - alpha)
            H = 2.0 * G.copy()
            for s in slices:
                A = G[s, s]
                Ab = A @ x[s]
                r = math.sqrt(x[s] @ Ab + eps * eps)
                grad[s] += eta * Ab / r
                H[s, s] += eta * (A / r - np.outer(Ab, Ab) / r ** 3)
            gi = grad[idx]
            step = np.linalg.solve(H[np.ix_(idx, idx)], gi)
            dec = float(gi @ step)
            if not dec > 1e-28:
                break
            t = 1.0
            while t > 1e-14:
                xn = x.copy()
                xn[idx] -= t * step
                fn = fs(xn, eps)
                if fn <= f0 - 1e-4 * t * dec:
                    break
                t *= 0.5
            else:
                break
            x, f0 = xn, fn
    return x


def subgradient_solver(alpha, G, eta, m0: int, m1: int, iters: int = 1_000_000,
                       polish: bool = True) -> np.ndarray:
    """Minimize the penalized objective by subgradient descent.

    With ``G = L L^T`` the problem is solved in ``g = L^T beta``, where the
    smooth part is isotropic. The best iterate and the weighted average are
    kept. With ``polish`` the support read off the subgradient solution is
    refined by Newton's method on the restricted smooth problem, and the
    better point is returned.
    """
    alpha = np.asarray(alpha, dtype=float)
    G = np.asarray(G, dtype=float)
    L = np.linalg.cholesky(G)
    Linv_T = np.linalg.inv(L).T
    c = np.linalg.solve(L, alpha)
    p = (len(alpha) - m0) // m1
    rows = []
    for k in range(p):
        s = slice(m0 + k * m1, m0 + (k + 1) * m1)
        Lk = np.linalg.cholesky(G[s, s])
        rows.append(Lk.T @ Linv_T[s, :])
    M = np.vstack(rows) if rows else np.zeros((0, len(alpha)))
    best_g, avg_g = _subgradient_loop(c, M, float(eta), int(m1), int(iters))
    best, avg = Linv_T @ best_g, Linv_T @ avg_g
    f = lambda z: penalized_objective(alpha, G, eta, m0, m1, z)
    cands = [best, avg]
    if polish:
        for x in (best, avg):
            scale = max(1.0, float(np.max(np.abs(x))))
            supp = [k for k in range(p)
                    if np.linalg.norm(x[m0 + k * m1:m0 + (k + 1) * m1]) > 1e-4 * scale]
            cands.append(_restricted_newton(alpha, G, eta, m0, m1, supp, x))
    return min(cands, key=f)


def enumeration_solver(alpha, G, eta, m0: int, m1: int) -> np.ndarray:
    """Exact minimizer for small ``p`` by trying every support.

    For each subset of groups the restricted problem is minimized by Newton's
    method; the optimum's own support yields it, and every other candidate is
    a feasible point, so the best candidate is the global minimizer.
    """
    alpha = np.asarray(alpha, dtype=float)
    G = np.asarray(G, dtype=float)
    p = (len(alpha) - m0) // m1
    x0 = np.linalg.solve(G, alpha)
    f = lambda z: penalized_objective(alpha, G, eta, m0, m1, z)
    best, best_val = None, np.inf
    for r in range(p + 1):
        for supp in itertools.combinations(range(p), r):
            x = _restricted_newton(alpha, G, eta, m0, m1, list(supp), x0)
            v = f(x)
            if v < best_val:
                best, best_val = x, v
    return best


def dense_solve(A, b) -> np.ndarray:
    """Plain dense linear solve, the reference for unpenalized refits."""
    return np.linalg.solve(np.asarray(A, float), np.asarray(b, float))


def chi_square_tail_by_integration(x: float, dof: int) -> float:
    """``P(chi2_dof > x)`` by integrating the density numerically."""
    from scipy import integrate
    k = dof / 2.0
    logc = -k * math.log(2.0) - math.lgamma(k)
    dens = lambda s: math.exp(logc + (k - 1.0) * math.log(s) - s / 2.0) if s > 0 else 0.0
    val, _ = integrate.quad(dens, 0.0, x, limit=500, epsabs=1e-14, epsrel=1e-13)
    return 1.0 - val


def trapezoid_mse(f_hat: Callable, f_true: Callable, interval, n_points: int = 1_000_001) -> float:
    """``sqrt( (1/L) int (f_hat - f_true)^2 )`` by the trapezoid rule."""
    L = interval[1] - interval[0]
    return math.sqrt(dense_quadrature(lambda t: (f_hat(t) - f_true(t)) ** 2, interval,
                                      n_points) / L)
