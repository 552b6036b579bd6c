"""Penalized least squares per node by block coordinate descent.

The objective for node ``j`` is

    -2 beta^T alpha_j + beta^T G beta + eta * sum_{k >= 1} sqrt(beta_k^T G_kk beta_k)

with group 0 (the background) unpenalized. With ``G_kk = L L^T`` and
``r_k = alpha_k - sum_{k' != k} G_kk' beta_k'``, the exact minimizer over one
group is ``beta_k = (1 - eta / (2 |v|))_+ G_kk^{-1} r_k`` where ``v = L^{-1} r_k``.
"""

from __future__ import annotations

import json
import math
import warnings
import weakref
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence

import numpy as np
from scipy import linalg

from .design import DesignCache
from .errors import NumericError, SingularDesignError

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 500
REFRESH_EVERY = 25
NEWTON_AFTER = 8


@dataclass(frozen=True, eq=False)
class NodeFit:
    """Solution of one node's penalized (or restricted) problem."""

    node_j: int
    beta: np.ndarray = field(repr=False)
    eta: float
    active_set: frozenset
    loss_value: float
    objective: float
    iterations: int
    converged: bool
    frozen: frozenset = frozenset()
    history: Optional[tuple] = field(default=None, repr=False)

    @property
    def model_size(self) -> int:
        return len(self.active_set)

    def to_dict(self) -> dict:
        return {"node": self.node_j, "eta": self.eta, "beta": self.beta.tolist(),
                "active_set": sorted(self.active_set), "loss": self.loss_value,
                "objective": self.objective, "iterations": self.iterations,
                "converged": self.converged, "frozen": sorted(self.frozen)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d) -> "NodeFit":
        return cls(int(d["node"]), np.asarray(d["beta"], dtype=float), float(d["eta"]),
                   frozenset(d["active_set"]), float(d["loss"]), float(d["objective"]),
                   int(d["iterations"]), bool(d["converged"]), frozenset(d.get("frozen", ())))


class BlockFactors:
    """Cholesky factors of the diagonal blocks of ``G``, shared by all fits on a design."""

    def __init__(self, design: DesignCache):
        p, m0, m1 = design.p, design.m0, design.m1
        self.G00 = _cholesky(design.block(0, 0), 0)
        self.L = np.zeros((p, m1, m1))
        self.Linv = np.zeros((p, m1, m1))
        frozen = []
        for k in range(p):
            Gkk = design.block(k + 1, k + 1)
            if design.event_counts[k] == 0 or not np.any(Gkk):
                frozen.append(k)
                continue
            L = _cholesky(Gkk, k + 1)
            self.L[k] = L
            self.Linv[k] = linalg.solve_triangular(L, np.eye(m1), lower=True)
        self.frozen = frozenset(frozen)
        if frozen:
            warnings.warn(f"groups of nodes {sorted(frozen)} have no events and are "
                          "fixed at zero", RuntimeWarning, stacklevel=3)
        self.free = np.array([k not in self.frozen for k in range(p)])


def _cholesky(A: np.ndarray, group: int) -> np.ndarray:
    try:
        return linalg.cholesky(A, lower=True)
    except linalg.LinAlgError:
        jitter = 1e-10 * np.trace(A) / A.shape[0]
        try:
            return linalg.cholesky(A + jitter * np.eye(A.shape[0]), lower=True)
        except linalg.LinAlgError:
            raise SingularDesignError(f"diagonal block of group {group} is not positive "
                                      "definite", group) from None


_FACTORS: "weakref.WeakKeyDictionary[DesignCache, BlockFactors]" = weakref.WeakKeyDictionary()


def block_factors(design: DesignCache) -> BlockFactors:
    fac = _FACTORS.get(design)
    if fac is None:
        fac = BlockFactors(design)
        _FACTORS[design] = fac
    return fac


# -- objective pieces ---------------------------------------------------------

def loss(design: DesignCache, j: int, beta: np.ndarray) -> float:
    """``-2 beta^T alpha_j + beta^T G beta``."""
    beta = np.asarray(beta, dtype=float)
    return float(-2.0 * beta @ design.alpha[j] + beta @ (design.G @ beta))


def penalty(design: DesignCache, beta: np.ndarray) -> float:
    """``sum_k sqrt(beta_k^T G_kk beta_k)`` over transfer groups."""
    total = 0.0
    for g in range(1, design.p + 1):
        sl = design.group_slice(g)
        bk = beta[sl]
        if np.any(bk):
            total += math.sqrt(max(float(bk @ design.G[sl, sl] @ bk), 0.0))
    return total


def objective(design: DesignCache, j: int, beta: np.ndarray, eta: float) -> float:
    return loss(design, j, beta) + eta * penalty(design, beta)


def _active(design: DesignCache, beta: np.ndarray) -> frozenset:
    B = beta[design.m0:].reshape(design.p, design.m1)
    return frozenset(int(k) for k in np.nonzero(np.any(B != 0, axis=1))[0])


def null_residual_norms(design: DesignCache, j: int) -> np.ndarray:
    """``|L_k^{-1} (alpha_k - G_k0 G00^{-1} alpha_0)|`` per node ``k``.

    These are the group statistics at the background-only fit, so every
    ``eta >= 2 max_k`` of them gives the empty model.
    """
    fac = block_factors(design)
    m0, m1, p = design.m0, design.m1, design.p
    a = design.alpha[j]
    b0 = linalg.cho_solve((fac.G00, True), a[:m0])
    r = (a[m0:] - design.G[m0:, :m0] @ b0).reshape(p, m1)
    v = np.einsum("kab,kb->ka", fac.Linv, r)
    out = np.linalg.norm(v, axis=1)
    out[~fac.free] = 0.0
    return out


def kkt_residuals(design: DesignCache, j: int, beta: np.ndarray, eta: float) -> dict:
    """Stationarity violations of a candidate solution.

    ``background``: norm of the unpenalized gradient. ``active``: largest norm
    of the group gradient for nonzero groups. ``inactive``: largest excess of
    ``|L_k^{-1} r_k|`` over ``eta / 2`` for zero groups.
    """
    fac = block_factors(design)
    m0, m1, p = design.m0, design.m1, design.p
    beta = np.asarray(beta, dtype=float)
    grad = 2.0 * (design.G @ beta - design.alpha[j])
    out = {"background": float(np.linalg.norm(grad[:m0])), "active": 0.0, "inactive": 0.0}
    for k in range(p):
        if k in fac.frozen:
            continue
        sl = design.group_slice(k + 1)
        bk = beta[sl]
        Gkk = design.G[sl, sl]
        if np.any(bk):
            q = math.sqrt(max(float(bk @ Gkk @ bk), 1e-300))
            res = grad[sl] + eta * (Gkk @ bk) / q
            out["active"] = max(out["active"], float(np.linalg.norm(res)))
        else:
            rk = -0.5 * grad[sl]
            nv = float(np.linalg.norm(fac.Linv[k] @ rk))
            out["inactive"] = max(out["inactive"], nv - 0.5 * eta)
    return out


# -- solver ---------------------------------------------------------------------

def _newton_active(design: DesignCache, j: int, beta: np.ndarray, eta: float,
                   active: Sequence[int], steps: int = 30) -> np.ndarray:
    """Damped Newton on the background and the nonzero ``active`` groups.

    The penalty is smooth away from zero, so on a settled active set this
    converges quadratically where block updates crawl (ill-conditioned
    cross-group coupling). Coefficients outside the active set are zero and
    stay so; the objective never increases.
    """
    m0, m1 = design.m0, design.m1
    idx = np.concatenate([np.arange(m0)] + [np.arange(m0 + k * m1, m0 + (k + 1) * m1)
                                            for k in active])
    G = design.G[np.ix_(idx, idx)]
    a = design.alpha[j][idx]
    blocks = [slice(m0 + i * m1, m0 + (i + 1) * m1) for i in range(len(active))]

    def f(z):
        val = float(-2.0 * z @ a + z @ G @ z)
        for sl in blocks:
            val += eta * math.sqrt(max(float(z[sl] @ G[sl, sl] @ z[sl]), 0.0))
        return val

    x = beta[idx].copy()
    f0 = f(x)
    for _ in range(steps):
        grad = 2.0 * (G @ x - a)
        H = 2.0 * G
        for sl in blocks:
            A = G[sl, sl]
            Ab = A @ x[sl]
            q = math.sqrt(max(float(x[sl] @ Ab), 1e-300))
            grad[sl] += eta * Ab / q
            H[sl, sl] += eta * (A / q - np.outer(Ab, Ab) / q ** 3)
        try:
            step = linalg.solve(H, grad, assume_a="sym")
        except (linalg.LinAlgError, ValueError):
            break
        dec = float(grad @ step)
        # below this the decrease is lost in rounding of the objective
        if not dec > 1e-13 * max(1.0, abs(f0)):
            break
        t = 1.0
        while t > 1e-8:
            xn = x - t * step
            fn = f(xn)
            if fn <= f0 - 1e-4 * t * dec:
                break
            t *= 0.5
        else:
            break
        x, f0 = xn, fn
    out = beta.copy()
    out[idx] = x
    return out


class _State:
    """Coefficients and the running gradient ``G beta`` of one BCD run."""

    def __init__(self, design, j, beta0):
        self.d = design
        self.j = j
        self.beta = np.zeros(design.dim) if beta0 is None else np.array(beta0, dtype=float)
        self.Gb = design.G @ self.beta

    def refresh(self):
        self.Gb = self.d.G @ self.beta

    def set_group(self, sl, new):
        delta = new - self.beta[sl]
        if np.any(delta):
            self.Gb += self.d.G[:, sl] @ delta
            self.beta[sl] = new
        return delta

    def residual(self, sl):
        return self.d.alpha[self.j][sl] - self.Gb[sl] + self.d.G[sl, sl] @ self.beta[sl]


def fit_node(design: DesignCache, j: int, eta: float, tol: float = DEFAULT_TOL,
             max_iter: int = DEFAULT_MAX_ITER, beta0: Optional[np.ndarray] = None,
             record_objective: bool = False) -> NodeFit:
    """Minimize the penalized loss of node ``j`` by block coordinate descent.

    Parameters
    ----------
    design : DesignCache
    j : int
        Target node.
    eta : float
        Penalty level, ``>= 0``.
    tol : float
        Stop when the largest block change is below ``tol`` times the largest
        coefficient magnitude (an absolute floor of ``tol`` applies).
    max_iter : int
        Maximum number of sweeps; the fit is returned with ``converged=False``
        when reached.
    beta0 : array, optional
        Warm start.
    record_objective : bool
        Keep the objective after every block update in ``history``.

    Notes
    -----
    Sweeps run over the background and the currently active groups; inactive
    groups are screened all at once, and any that violate their zero
    condition join the active set before the next sweep. Convergence is only
    declared after a screening pass finds no violations. Once the active set
    has been stable for a few sweeps, a damped Newton solve on it replaces the
    slow tail of the sweeps.
    """
    if not eta >= 0:
        raise ValueError("eta must be nonnegative")
    fac = block_factors(design)
    p, m0, m1 = design.p, design.m0, design.m1
    st = _State(design, j, beta0)
    for k in fac.frozen:
        st.set_group(design.group_slice(k + 1), np.zeros(m1))
    hist: Optional[list] = [] if record_objective else None
    half_eta = 0.5 * eta

    def obj():
        return objective(design, j, st.beta, eta)

    if hist is not None:
        hist.append(obj())
    sl0 = design.group_slice(0)

    def update(k) -> float:
        """Exact update of node-group ``k`` (or the background when ``k < 0``)."""
        if k < 0:
            new = linalg.cho_solve((fac.G00, True), st.residual(sl0))
            delta = st.set_group(sl0, new)
        else:
            sl = design.group_slice(k + 1)
            v = fac.Linv[k] @ st.residual(sl)
            nv = float(np.linalg.norm(v))
            if nv <= half_eta:
                new = np.zeros(m1)
            else:
                new = (1.0 - half_eta / nv) * (fac.Linv[k].T @ v)
            delta = st.set_group(sl, new)
        if hist is not None:
            hist.append(obj())
        return float(np.max(np.abs(delta))) if delta.size else 0.0

    def screen():
        """Inactive, free groups whose zero condition fails."""
        B = st.beta[m0:].reshape(p, m1)
        inactive = fac.free & ~np.any(B != 0, axis=1)
        idx = np.nonzero(inactive)[0]
        if idx.size == 0:
            return []
        R = (design.alpha[j][m0:] - st.Gb[m0:]).reshape(p, m1)[idx]
        nv = np.linalg.norm(np.einsum("kab,kb->ka", fac.Linv[idx], R), axis=1)
        viol = idx[nv > half_eta]
        # largest violators first keeps the active set small on long paths
        return list(viol[np.argsort(-nv[nv > half_eta], kind="stable")])

    active = sorted(_active(design, st.beta))
    it = 0
    converged = False
    # first pass visits every free group once
    update(-1)
    for k in range(p):
        if fac.free[k]:
            update(k)
    it = 1
    active = sorted(_active(design, st.beta))
    stable, tried = 0, None
    while it < max_iter:
        it += 1
        if it % REFRESH_EVERY == 0:
            st.refresh()
        change = update(-1)
        for k in active:
            change = max(change, update(k))
        scale = max(1.0, float(np.max(np.abs(st.beta))))
        new_active = sorted(_active(design, st.beta))
        stable = stable + 1 if new_active == active else 0
        active = new_active
        if stable >= NEWTON_AFTER and tried != active and change > tol * scale:
            tried = active
            st.beta = _newton_active(design, j, st.beta, eta, active)
            st.refresh()
            if hist is not None:
                hist.append(obj())
            continue
        if change <= tol * scale:
            st.refresh()
            viol = screen()
            if not viol:
                converged = True
                break
            for k in viol:
                update(k)
            active = sorted(_active(design, st.beta))
    beta = st.beta.copy()
    if not np.all(np.isfinite(beta)):
        raise NumericError(f"non-finite coefficients for node {j}")
    lv = loss(design, j, beta)
    return NodeFit(j, beta, float(eta), _active(design, beta), lv,
                   lv + eta * penalty(design, beta), it, converged, fac.frozen,
                   None if hist is None else tuple(hist))


def fit_path(design: DesignCache, j: int, eta_grid: Sequence[float], tol: float = DEFAULT_TOL,
             max_iter: int = DEFAULT_MAX_ITER, max_size: Optional[int] = None) -> List[NodeFit]:
    """Warm-started fits along a strictly decreasing ``eta_grid``.

    With ``max_size`` the path stops after the first fit whose model size
    exceeds it (that fit is included).
    """
    grid = np.asarray(eta_grid, dtype=float)
    if grid.size > 1 and not np.all(np.diff(grid) < 0):
        raise ValueError("eta_grid must be strictly decreasing")
    fits: List[NodeFit] = []
    beta = None
    for eta in grid:
        f = fit_node(design, j, float(eta), tol, max_iter, beta0=beta)
        fits.append(f)
        beta = f.beta
        if max_size is not None and f.model_size > max_size:
            break
    return fits


def refit(design: DesignCache, j: int, support: Iterable[int],
          background_coefs: Optional[Sequence[int]] = None) -> NodeFit:
    """Unpenalized least squares restricted to the background and ``support``.

    Parameters
    ----------
    support : iterable of int
        Source nodes whose transfer groups are free; all others are zero.
    background_coefs : sequence of int, optional
        Indices of the background coefficients left free (default: all).
        ``[0]`` with a constant-first basis fits a constant background.
    """
    support = sorted(set(int(k) for k in support))
    m0 = design.m0
    bg = list(range(m0)) if background_coefs is None else sorted(set(background_coefs))
    idx = list(bg)
    groups = [0] * len(bg)
    for k in support:
        sl = design.group_slice(k + 1)
        idx.extend(range(sl.start, sl.stop))
        groups.extend([k + 1] * design.m1)
    idx = np.array(idx, dtype=int)
    A = design.G[np.ix_(idx, idx)]
    rhs = design.alpha[j][idx]
    try:
        c = linalg.cho_factor(A, lower=True)
        sol = linalg.cho_solve(c, rhs)
    except linalg.LinAlgError:
        raise SingularDesignError(
            f"restricted Gram is singular; first failing group is "
            f"{_first_singular_group(A, groups)}", _first_singular_group(A, groups)) from None
    beta = np.zeros(design.dim)
    beta[idx] = sol
    if not np.all(np.isfinite(beta)):
        raise NumericError(f"non-finite refit coefficients for node {j}")
    lv = loss(design, j, beta)
    return NodeFit(j, beta, 0.0, _active(design, beta), lv, lv, 1, True)


def _first_singular_group(A: np.ndarray, groups: Sequence[int]) -> int:
    """Smallest prefix of groups whose restricted Gram fails to factor."""
    groups = np.asarray(groups)
    for g in dict.fromkeys(groups.tolist()):
        keep = np.nonzero(groups <= g)[0] if g else np.nonzero(groups == 0)[0]
        try:
            linalg.cholesky(A[np.ix_(keep, keep)], lower=True)
        except linalg.LinAlgError:
            return int(g)
    return int(groups[-1])
