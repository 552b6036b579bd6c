"""Seeded replication harness: simulate, select dimensions, fit, evaluate, test."""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .design import DesignCache, build_design
from .estimator import DEFAULT_TOL, block_factors
from .inference import TestConfig, test_all_nodes
from .metrics import FittedModel, aggregate, evaluate
from .model import PAPER_SUPPORT, ModelSpec, preset, random_network
from .selection import DEFAULT_N_GRID, select_basis_dims, select_eta
from .simulator import EventData, simulate


@dataclass(frozen=True)
class ReplicationConfig:
    """Everything that defines one replication study.

    The ground-truth model is drawn once from ``model_seed``; replication
    ``r`` simulates with seed ``seed + r``. Dimensions are either fixed
    (``m0``, ``m1``) or chosen from candidate lists. With
    ``dims_protocol="average"`` the BIC selection runs on every replication
    and all replications are then fitted at the rounded averages; with
    ``"per_rep"`` each replication uses its own selection.
    """

    preset: str = "setting1_1"
    T: float = 10.0
    p: Optional[int] = None
    p_e: float = 0.025
    network: str = "erdos_renyi"
    power_alpha: Optional[float] = None
    rho: float = 1.0
    frequency: Optional[float] = None
    model_seed: int = 0
    seed: int = 0
    reps: int = 1
    degree0: int = 4
    degree1: int = 4
    m0: Optional[int] = None
    m1: Optional[int] = None
    m0_candidates: Tuple[int, ...] = ()
    m1_candidates: Tuple[int, ...] = ()
    dims_protocol: str = "average"
    support_b: float = PAPER_SUPPORT
    n_grid: int = DEFAULT_N_GRID
    alpha_T: Optional[float] = None
    tol: float = DEFAULT_TOL
    fit: bool = True
    run_test: bool = False
    alpha_level: float = 0.05
    grid_resolution: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)

    def content_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def build_model(cfg: ReplicationConfig) -> ModelSpec:
    edges = None
    if cfg.preset == "setting2" and cfg.network == "power_law":
        p = 100 if cfg.p is None else cfg.p
        edges = random_network("power_law", p, cfg.model_seed, alpha=cfg.power_alpha or 1.0)
    return preset(cfg.preset, p=cfg.p, T=cfg.T, seed=cfg.model_seed, edges=edges, rho=cfg.rho,
                  frequency=cfg.frequency, p_e=cfg.p_e)


def choose_dims(cfg: ReplicationConfig, events: EventData):
    """``(m0, m1, BasisSelection or None)`` for one data set."""
    if cfg.m0_candidates and cfg.m1_candidates:
        sel = select_basis_dims(events, cfg.m0_candidates, cfg.m1_candidates, cfg.support_b,
                                cfg.degree0, cfg.degree1, cfg.n_grid, cfg.alpha_T, tol=cfg.tol)
        return sel.m0, sel.m1, sel
    if cfg.m0 is None or cfg.m1 is None:
        raise ValueError("give m0 and m1, or both candidate lists")
    return cfg.m0, cfg.m1, None


def fit_all(design: DesignCache, n_grid: int = DEFAULT_N_GRID, alpha_T: Optional[float] = None,
            tol: float = DEFAULT_TOL, nodes: Optional[Sequence[int]] = None, threads: int = 1):
    """GIC-selected fit of every node; nodes without events get ``None``.

    Node fits are independent; with ``threads > 1`` they run in a thread pool
    and the results do not depend on the pool size.
    """
    block_factors(design)
    todo = [j for j in range(design.p)
            if (nodes is None or j in nodes) and design.event_counts[j] > 0]

    def one(j):
        return select_eta(design, j, n_grid, alpha_T, tol=tol)

    if threads > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            done = dict(zip(todo, ex.map(one, todo)))
    else:
        done = {j: one(j) for j in todo}
    fits = [done[j][0] if j in done else None for j in range(design.p)]
    paths = {j: done[j][1] for j in todo}
    return fits, paths


def _selection_job(args):
    cfg, r = args
    model = build_model(cfg)
    ev = simulate(model, cfg.seed + r)
    m0, m1, sel = choose_dims(cfg, ev)
    return {"rep": r, "seed": cfg.seed + r, "m0": m0, "m1": m1,
            "surface": None if sel is None else sel.rows()}


def _replication_job(args) -> dict:
    cfg, r, dims = args
    model = build_model(cfg)
    seed = cfg.seed + r
    ev = simulate(model, seed)
    if dims is None:
        m0, m1, _ = choose_dims(cfg, ev)
    else:
        m0, m1 = dims
    row = {"rep": r, "seed": seed, "m0": m0, "m1": m1, "n_events": ev.n_events}
    if cfg.fit:
        design = build_design(ev, m0, m1, cfg.support_b, grid_resolution=cfg.grid_resolution,
                              degree0=cfg.degree0, degree1=cfg.degree1,
                              method="exact" if cfg.grid_resolution is None else "midpoint")
        fits, _ = fit_all(design, cfg.n_grid, cfg.alpha_T, cfg.tol)
        fm = FittedModel.from_fits(design, fits)
        rep = evaluate(model, fm)
        row.update(rep.as_row())
        row["converged"] = all(fm.converged)
    if cfg.run_test:
        tc = TestConfig(degree0=cfg.degree0, degree1=cfg.degree1, n_grid=cfg.n_grid,
                        alpha_T=cfg.alpha_T, alpha_level=cfg.alpha_level, tol=cfg.tol,
                        grid_resolution=cfg.grid_resolution)
        tests = test_all_nodes(ev, m0, m1, cfg.support_b, tc)
        row["tests"] = [t.as_row() for t in tests]
    return row


def _map(fn, jobs, threads: int):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, jobs))


def default_threads() -> int:
    return max(1, os.cpu_count() or 1)


@dataclass
class ReplicationResult:
    config: ReplicationConfig
    rows: List[dict]
    dims: Optional[Tuple[int, int]] = None
    selections: List[dict] = field(default_factory=list)

    def summary(self, keys=("mse_nu", "mse_omega", "fnr", "fpr", "f1")) -> Dict[str, dict]:
        fitted = [r for r in self.rows if "f1" in r]
        return aggregate(fitted, [k for k in keys if fitted and k in fitted[0]])

    def p_values(self) -> np.ndarray:
        return np.array([t["p_value"] for r in self.rows for t in r.get("tests", [])])

    def rejections_by_node(self) -> Dict[int, float]:
        acc: Dict[int, List[bool]] = {}
        for r in self.rows:
            for t in r.get("tests", []):
                acc.setdefault(t["node_j"], []).append(bool(t["reject"]))
        return {j: float(np.mean(v)) for j, v in sorted(acc.items())}


def replicate(cfg: ReplicationConfig, threads: int = 1) -> ReplicationResult:
    """Run ``cfg.reps`` seeded replications."""
    selections: List[dict] = []
    dims = None
    if cfg.m0_candidates and cfg.m1_candidates and cfg.dims_protocol == "average":
        selections = _map(_selection_job, [(cfg, r) for r in range(cfg.reps)], threads)
        dims = (int(round(np.mean([s["m0"] for s in selections]))),
                int(round(np.mean([s["m1"] for s in selections]))))
    elif cfg.m0 is not None and cfg.m1 is not None:
        dims = (cfg.m0, cfg.m1)
    rows = _map(_replication_job, [(cfg, r, dims) for r in range(cfg.reps)], threads)
    return ReplicationResult(cfg, rows, dims, selections)
