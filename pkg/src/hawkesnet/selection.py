"""Tuning selection: GIC over the penalty path and BIC over basis dimensions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .design import DesignBuilder, DesignCache
from .errors import UndefinedKappaError
from .estimator import (DEFAULT_MAX_ITER, DEFAULT_TOL, NodeFit, fit_path,
                        null_residual_norms, refit)
from .simulator import EventData

DEFAULT_N_GRID = 50
DEFAULT_MIN_RATIO = 1e-3
DEFAULT_S0_SCALE = 3.0


@dataclass(frozen=True)
class GicRecord:
    """One point of the GIC path."""

    eta: float
    gic_value: float
    loss: float
    kappa: float
    model_size: int
    alpha_T: float

    def as_row(self) -> dict:
        return {"eta": self.eta, "gic": self.gic_value, "loss": self.loss,
                "kappa": self.kappa, "model_size": self.model_size, "alpha_T": self.alpha_T}


def default_alpha_T(p: int, T: float) -> float:
    """``(log p)^2 log T / 2``."""
    return math.log(p) ** 2 * math.log(T) / 2.0


def default_s0(T: float, p: int, scale: float = DEFAULT_S0_SCALE) -> int:
    """Model-size cap ``ceil(scale * sqrt(T) / log log T)``, at most ``p``.

    When ``log log T <= 0`` (``T <= e``) the cap is ``p``.
    """
    ll = math.log(math.log(T)) if T > 1.0 else 0.0
    if ll <= 0.0:
        return p
    return int(min(p, math.ceil(scale * math.sqrt(T) / ll)))


def kappa(design: DesignCache, j: int) -> float:
    n = int(design.event_counts[j])
    if n == 0:
        raise UndefinedKappaError(f"node {j} has no events")
    return design.horizon_T / n


def gic(design: DesignCache, fit: NodeFit, alpha_T: float) -> GicRecord:
    """``loss * kappa + (alpha_T / T) * |E|``."""
    kap = kappa(design, fit.node_j)
    size = fit.model_size
    value = fit.loss_value * kap + (alpha_T / design.horizon_T) * size
    return GicRecord(fit.eta, value, fit.loss_value, kap, size, alpha_T)


def eta_max(design: DesignCache, j: int) -> float:
    """Smallest penalty (up to a relative margin of 1e-9) that empties the model."""
    top = float(np.max(null_residual_norms(design, j), initial=0.0))
    return 2.0 * top * (1.0 + 1e-9)


def eta_grid(eta_hi: float, n_grid: int, min_ratio: float = DEFAULT_MIN_RATIO) -> np.ndarray:
    """Geometric grid from ``eta_hi`` down to ``eta_hi * min_ratio``."""
    if n_grid < 2:
        raise ValueError("n_grid must be >= 2")
    if not eta_hi > 0:
        return np.array([0.0])
    return np.geomspace(eta_hi, eta_hi * min_ratio, n_grid)


def select_eta(design: DesignCache, j: int, n_grid: int = DEFAULT_N_GRID,
               alpha_T: Optional[float] = None, s0: Optional[int] = None,
               min_ratio: float = DEFAULT_MIN_RATIO, tol: float = DEFAULT_TOL,
               max_iter: int = DEFAULT_MAX_ITER) -> Tuple[NodeFit, List[GicRecord]]:
    """GIC-minimizing fit along a warm-started geometric penalty path.

    The path starts at the smallest penalty giving the empty model and stops
    once the model size exceeds ``s0``; fits larger than ``s0`` are never
    selected. Ties go to the larger penalty.
    """
    if alpha_T is None:
        alpha_T = default_alpha_T(design.p, design.horizon_T)
    if s0 is None:
        s0 = default_s0(design.horizon_T, design.p)
    kappa(design, j)
    grid = eta_grid(eta_max(design, j), n_grid, min_ratio)
    fits = fit_path(design, j, grid, tol, max_iter, max_size=s0)
    records = [gic(design, f, alpha_T) for f in fits]
    best = 0
    for i, r in enumerate(records):
        if r.model_size <= s0 and r.gic_value < records[best].gic_value:
            best = i
    return fits[best], records


@dataclass(frozen=True)
class BasisSelection:
    m0: int
    m1: int
    surface: Dict[Tuple[int, int], float]
    initial_edges: Tuple[frozenset, ...]

    def rows(self) -> List[dict]:
        return [{"m0": a, "m1": b, "bic": v} for (a, b), v in sorted(self.surface.items())]


def bic_value(design: DesignCache, fits: Sequence[NodeFit]) -> float:
    """Sum over nodes of ``loss * kappa + |beta|_0 log(T) / T``."""
    T = design.horizon_T
    total = 0.0
    for f in fits:
        nnz = int(np.count_nonzero(f.beta))
        total += f.loss_value * kappa(design, f.node_j) + nnz * math.log(T) / T
    return total


def select_basis_dims(events: EventData, m0_candidates: Sequence[int],
                      m1_candidates: Sequence[int], support_b: float, degree0: int = 4,
                      degree1: int = 4, n_grid: int = DEFAULT_N_GRID,
                      alpha_T: Optional[float] = None, nodes: Optional[Sequence[int]] = None,
                      tol: float = DEFAULT_TOL) -> BasisSelection:
    """Pick ``(m0, m1)`` by BIC on refits restricted to an initial edge set.

    The initial edge sets come from GIC-selected fits at the largest
    candidates. Every candidate pair then refits each node on its initial
    edges, and the BIC is summed over nodes that have events.
    """
    m0c = sorted(set(int(m) for m in m0_candidates))
    m1c = sorted(set(int(m) for m in m1_candidates))
    if not m0c or not m1c:
        raise ValueError("candidate lists must be nonempty")
    if nodes is None:
        nodes = [j for j in range(events.p) if events.counts[j] > 0]
    if len(m0c) == 1 and len(m1c) == 1:
        return BasisSelection(m0c[0], m1c[0], {}, ())
    builder = DesignBuilder(events, support_b, degree0, degree1)
    d_init = builder.build(m0c[-1], m1c[-1])
    edges = tuple(select_eta(d_init, j, n_grid, alpha_T, tol=tol)[0].active_set
                  for j in nodes)
    surface = {}
    for a in m0c:
        for b in m1c:
            d = builder.build(a, b)
            fits = [refit(d, j, e) for j, e in zip(nodes, edges)]
            surface[(a, b)] = bic_value(d, fits)
    best = min(surface, key=lambda key: (surface[key], key))
    return BasisSelection(best[0], best[1], surface, edges)
