"""Fitted-model container and evaluation metrics."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from .design import DesignCache
from .estimator import NodeFit
from .model import ModelSpec
from .spline_basis import SplineBasis, constant_background_basis, gauss_legendre, make_basis

_DEFAULT_PANELS = 2000
_PANEL_POINTS = 8


def _basis_to_dict(b: SplineBasis) -> dict:
    return {"order": b.order, "dim": b.dim, "interval": list(b.interval),
            "constant_first": b.constant_first}


def _basis_from_dict(d: Mapping) -> SplineBasis:
    if d.get("constant_first"):
        return constant_background_basis(d["dim"], d["interval"], d["order"])
    return make_basis(d["order"], d["dim"], d["interval"])


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Per-node coefficients with the bases needed to evaluate them.

    ``beta[j]`` has the layout of :class:`~hawkesnet.design.DesignCache`.
    ``edges`` holds ``(target, source)`` pairs of nonzero transfer groups.
    """

    p: int
    horizon_T: float
    basis0: SplineBasis
    basis1: SplineBasis
    beta: np.ndarray = field(repr=False)
    etas: tuple = ()
    converged: tuple = ()
    extra: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_fits(cls, design: DesignCache, fits: Sequence[Optional[NodeFit]],
                  extra: Optional[dict] = None) -> "FittedModel":
        """Collect node fits; ``None`` entries (nodes without events) become zero."""
        beta = np.zeros((design.p, design.dim))
        etas, conv = [], []
        for j, f in enumerate(fits):
            if f is not None:
                beta[j] = f.beta
            etas.append(None if f is None else f.eta)
            conv.append(True if f is None else f.converged)
        return cls(design.p, design.horizon_T, design.basis0, design.basis1, beta,
                   tuple(etas), tuple(conv), dict(extra or {}))

    @property
    def m0(self) -> int:
        return self.basis0.dim

    @property
    def m1(self) -> int:
        return self.basis1.dim

    def coef(self, j: int, k: Optional[int] = None) -> np.ndarray:
        """Background coefficients of node ``j``, or its transfer coefficients from ``k``."""
        if k is None:
            return self.beta[j, :self.m0]
        s = self.m0 + k * self.m1
        return self.beta[j, s:s + self.m1]

    @property
    def edges(self) -> frozenset:
        B = self.beta[:, self.m0:].reshape(self.p, self.p, self.m1)
        return frozenset((int(j), int(k)) for j, k in zip(*np.nonzero(np.any(B != 0, axis=2))))

    def nu_hat(self, j: int, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return (self.basis0(np.atleast_1d(t)) @ self.coef(j)).reshape(t.shape)

    def omega_hat(self, j: int, k: int, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (self.basis1(np.atleast_1d(x)) @ self.coef(j, k)).reshape(x.shape)

    def to_dict(self) -> dict:
        return {"format": "hawkesnet.fit/1", "p": self.p, "horizon_T": self.horizon_T,
                "basis0": _basis_to_dict(self.basis0), "basis1": _basis_to_dict(self.basis1),
                "beta": self.beta.tolist(), "etas": list(self.etas),
                "converged": list(self.converged),
                "edges": [{"target": j, "source": k} for j, k in sorted(self.edges)],
                **({"extra": self.extra} if self.extra else {})}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True, default=_json_default)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d: Mapping) -> "FittedModel":
        return cls(int(d["p"]), float(d["horizon_T"]), _basis_from_dict(d["basis0"]),
                   _basis_from_dict(d["basis1"]), np.asarray(d["beta"], dtype=float),
                   tuple(d.get("etas", ())), tuple(d.get("converged", ())),
                   dict(d.get("extra", {})))

    @classmethod
    def from_json(cls, text_or_path) -> "FittedModel":
        text = str(text_or_path)
        if not text.lstrip().startswith("{"):
            with open(text) as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.ndarray,)):
        return o.tolist()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


@dataclass(frozen=True)
class EvalReport:
    """Estimation errors and edge-selection scores of one fit."""

    mse_nu: float
    mse_omega: float
    fnr: float
    fpr: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int
    notes: str = ""

    def as_row(self) -> dict:
        return asdict(self)


def _panel_rule(a: float, b: float, n_panels: int):
    x, w = gauss_legendre(_PANEL_POINTS)
    edges = np.linspace(a, b, n_panels + 1)
    h = np.diff(edges)
    t = (edges[:-1, None] + h[:, None] * x[None, :]).ravel()
    return t, (h[:, None] * w[None, :]).ravel()


def mse_background(truth: ModelSpec, fit: FittedModel, grid: int = _DEFAULT_PANELS) -> float:
    """Mean over nodes of the root mean squared background error on ``[0, T]``.

    ``grid`` is the number of Gauss panels (8 points each).
    """
    T = truth.horizon_T
    t, w = _panel_rule(0.0, T, grid)
    vals = []
    for j in range(truth.p):
        diff = fit.nu_hat(j, t) - truth.background(j, t)
        vals.append(math.sqrt(max(float(w @ diff ** 2) / T, 0.0)))
    return float(np.mean(vals))


def mse_transfer(truth: ModelSpec, fit: FittedModel, grid: int = 200) -> float:
    """Mean over targets ``j`` of ``sqrt(sum_k int (omega_hat - omega)^2)``."""
    b = max(truth.support_b, fit.basis1.b)
    t, w = _panel_rule(0.0, b, grid)
    pairs = set(truth.edge_set) | set(fit.edges)
    sq = np.zeros(truth.p)
    for j, k in pairs:
        diff = fit.omega_hat(j, k, t) - truth.transfer(j, k)(t)
        sq[j] += float(w @ diff ** 2)
    return float(np.mean(np.sqrt(sq)))


def selection_scores(truth_edges: Iterable, est_edges: Iterable, p: int) -> EvalReport:
    """Confusion counts over ordered pairs.

    The universe is all ``p (p - 1)`` off-diagonal pairs plus any self pair
    that appears in either set. ``f1`` of two empty sets is 1; other zero
    denominators give 0 and are listed in ``notes``.
    """
    truth = {(int(j), int(k)) for j, k in truth_edges}
    est = {(int(j), int(k)) for j, k in est_edges}
    selfs = {e for e in truth | est if e[0] == e[1]}
    universe = p * (p - 1) + len(selfs)
    tp = len(truth & est)
    fp = len(est - truth)
    fn = len(truth - est)
    tn = universe - tp - fp - fn
    notes = []
    if 2 * tp + fp + fn == 0:
        f1 = 1.0
        notes.append("f1:empty")
    else:
        f1 = 2 * tp / (2 * tp + fp + fn)
    if tp + fn == 0:
        fnr = 0.0
        notes.append("fnr:no-true-edges")
    else:
        fnr = fn / (tp + fn)
    if fp + tn == 0:
        fpr = 0.0
        notes.append("fpr:no-negatives")
    else:
        fpr = fp / (fp + tn)
    return EvalReport(float("nan"), float("nan"), fnr, fpr, f1, tp, fp, fn, tn, ";".join(notes))


def evaluate(truth: ModelSpec, fit: FittedModel) -> EvalReport:
    sc = selection_scores(truth.edge_set, fit.edges, truth.p)
    return EvalReport(mse_background(truth, fit), mse_transfer(truth, fit), sc.fnr, sc.fpr,
                      sc.f1, sc.tp, sc.fp, sc.fn, sc.tn, sc.notes)


def aggregate(rows: Sequence[Mapping], keys: Optional[Sequence[str]] = None) -> Dict[str, dict]:
    """Mean and standard error of each numeric column."""
    if not rows:
        return {}
    if keys is None:
        keys = [k for k, v in rows[0].items()
                if isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool)]
    out = {}
    for k in keys:
        x = np.array([float(r[k]) for r in rows], dtype=float)
        x = x[np.isfinite(x)]
        n = x.size
        mean = float(x.mean()) if n else float("nan")
        se = float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
        out[k] = {"mean": mean, "se": se, "n": n}
    return out
