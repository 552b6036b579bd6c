"""Event data container and simulation by thinning.

``simulate`` is exact modified (Ogata) thinning against a piecewise dominating
rate. ``simulate_iterative`` runs the fixed-point thinning construction on a
shared planar Poisson field and is used only as a cross-check of
``simulate``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import SimulationDivergedError
from .model import ModelSpec, mean_intensity_bound

_FLOAT_FMT = ".17g"
_UNIFORM_CHUNK = 1 << 16


@dataclass(frozen=True, eq=False)
class EventData:
    """Per-node sorted event times on ``(0, horizon_T]``."""

    p: int
    horizon_T: float
    times: tuple
    provenance: Dict = field(default_factory=dict)

    def __post_init__(self):
        ts = tuple(np.asarray(t, dtype=float).copy() for t in self.times)
        if len(ts) != self.p:
            raise ValueError(f"expected {self.p} event sequences, got {len(ts)}")
        for j, t in enumerate(ts):
            if t.ndim != 1:
                raise ValueError("event sequences must be one-dimensional")
            if t.size and (t[0] <= 0.0 or t[-1] > self.horizon_T):
                raise ValueError(f"node {j}: events must lie in (0, T]")
            if t.size > 1 and np.any(np.diff(t) <= 0):
                raise ValueError(f"node {j}: event times must be strictly increasing")
            t.setflags(write=False)
        object.__setattr__(self, "times", ts)

    @property
    def counts(self) -> np.ndarray:
        return np.array([t.size for t in self.times], dtype=int)

    @property
    def n_events(self) -> int:
        return int(self.counts.sum())

    def counting(self, j: int, t) -> np.ndarray:
        """``N_j(t)``, the number of events of node ``j`` at or before ``t``."""
        return np.searchsorted(self.times[j], np.asarray(t, dtype=float), side="right")

    def merged(self):
        """All events sorted by time: ``(times, nodes)``."""
        t = np.concatenate(self.times) if self.p else np.zeros(0)
        k = np.concatenate([np.full(x.size, j, dtype=np.int64) for j, x in enumerate(self.times)])
        order = np.argsort(t, kind="stable")
        return t[order], k[order]

    def permuted(self, perm: Sequence[int]) -> "EventData":
        """Relabel nodes so that new node ``perm[j]`` carries old node ``j``'s events."""
        perm = list(perm)
        new = [None] * self.p
        for old, nj in enumerate(perm):
            new[nj] = self.times[old]
        return EventData(self.p, self.horizon_T, tuple(new), dict(self.provenance))

    def __eq__(self, other):
        if not isinstance(other, EventData):
            return NotImplemented
        return (self.p == other.p and self.horizon_T == other.horizon_T
                and all(np.array_equal(a, b) for a, b in zip(self.times, other.times)))

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.p}|{self.horizon_T!r}".encode())
        for t in self.times:
            h.update(np.ascontiguousarray(t, dtype="<f8").tobytes())
            h.update(b"|")
        return h.hexdigest()[:16]

    # -- serialization -------------------------------------------------
    def _header_lines(self):
        meta = {"format": "hawkesnet.events/1", "p": self.p, "horizon_T": self.horizon_T,
                "provenance": self.provenance}
        return "# " + json.dumps(meta, sort_keys=True, default=str) + "\n"

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(self._header_lines())
        buf.write("node,time\n")
        tt, kk = self.merged()
        for t, k in zip(tt, kk):
            buf.write(f"{k},{format(t, _FLOAT_FMT)}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_jsonl(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(self._header_lines())
        tt, kk = self.merged()
        for t, k in zip(tt, kk):
            buf.write(f'{{"node": {k}, "time": {format(t, _FLOAT_FMT)}}}\n')
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @staticmethod
    def _read_meta(lines, p, horizon_T):
        meta = {}
        for line in lines:
            if line.startswith("#"):
                try:
                    meta = json.loads(line[1:])
                except json.JSONDecodeError:
                    continue
                break
        p = meta.get("p", p)
        horizon_T = meta.get("horizon_T", horizon_T)
        return p, horizon_T, meta.get("provenance", {})

    @classmethod
    def _from_pairs(cls, pairs, p, horizon_T, provenance):
        if p is None:
            p = 1 + max((k for k, _ in pairs), default=-1)
        if horizon_T is None:
            horizon_T = max((t for _, t in pairs), default=1.0)
        buckets = [[] for _ in range(p)]
        for k, t in pairs:
            buckets[k].append(t)
        return cls(int(p), float(horizon_T), tuple(np.sort(np.array(b, dtype=float)) for b in buckets),
                   provenance)

    @classmethod
    def from_csv(cls, path_or_text, p: Optional[int] = None,
                 horizon_T: Optional[float] = None) -> "EventData":
        lines = _read_lines(path_or_text)
        p, horizon_T, prov = cls._read_meta(lines, p, horizon_T)
        body = [ln for ln in lines if ln.strip() and not ln.startswith("#")]
        reader = csv.DictReader(body)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["node", "time"]:
            raise ValueError("event CSV must have the header 'node,time'")
        pairs = [(int(r["node"]), float(r["time"])) for r in reader]
        return cls._from_pairs(pairs, p, horizon_T, prov)

    @classmethod
    def from_jsonl(cls, path_or_text, p: Optional[int] = None,
                   horizon_T: Optional[float] = None) -> "EventData":
        lines = _read_lines(path_or_text)
        p, horizon_T, prov = cls._read_meta(lines, p, horizon_T)
        pairs = []
        for ln in lines:
            if ln.strip() and not ln.startswith("#"):
                rec = json.loads(ln)
                pairs.append((int(rec["node"]), float(rec["time"])))
        return cls._from_pairs(pairs, p, horizon_T, prov)

    @classmethod
    def load(cls, path, **kw) -> "EventData":
        if str(path).endswith((".jsonl", ".ndjson")):
            return cls.from_jsonl(path, **kw)
        return cls.from_csv(path, **kw)


def _read_lines(path_or_text):
    text = str(path_or_text)
    if "\n" not in text:
        with open(text) as fh:
            text = fh.read()
    return text.splitlines()


# -- compiled model tables ---------------------------------------------------

class _Tables:
    """Flat arrays describing a ModelSpec for the compiled kernel."""

    def __init__(self, model: ModelSpec):
        p = model.p
        self.p = p
        bgs = model.backgrounds
        lk = max([2 * len(bg.params) + 8 for bg in bgs if bg.kind == "spline"] + [1])
        self.bg_kind = np.zeros(p, dtype=np.int64)
        self.bg_par = np.zeros((p, 3))
        self.bg_knots = np.zeros((p, lk))
        self.bg_coef = np.zeros((p, lk))
        self.bg_order = np.ones(p, dtype=np.int64)
        self.bg_dim = np.ones(p, dtype=np.int64)
        for j, bg in enumerate(bgs):
            if bg.kind == "constant":
                self.bg_par[j] = (bg.params[0], 0.0, 0.0)
            elif bg.kind == "sinusoidal":
                off, amp, f, H = bg.params
                self.bg_par[j] = (off, amp, 2.0 * math.pi * f / H)
            else:
                from .spline_basis import make_basis
                order, H = int(bg.params[0]), bg.params[1]
                coefs = np.asarray(bg.params[2:])
                basis = make_basis(order, coefs.size, (0.0, H))
                self.bg_kind[j] = 1
                self.bg_par[j, 0] = H
                self.bg_knots[j, :basis.knots.size] = basis.knots
                self.bg_coef[j, :coefs.size] = coefs
                self.bg_order[j] = order
                self.bg_dim[j] = coefs.size

        items = sorted(model.transfers.items(), key=lambda kv: (kv[0][1], kv[0][0]))
        E = len(items)
        lk = max([2 * len(tf.params) + 8 for _, tf in items if tf.kind == "spline"] + [1])
        self.src_ptr = np.zeros(p + 1, dtype=np.int64)
        self.e_tgt = np.zeros(E, dtype=np.int64)
        self.e_kind = np.zeros(E, dtype=np.int64)
        self.e_par = np.zeros((E, 3))
        self.e_b = np.zeros(E)
        self.e_knots = np.zeros((E, lk))
        self.e_coef = np.zeros((E, lk))
        self.e_order = np.ones(E, dtype=np.int64)
        self.e_dim = np.ones(E, dtype=np.int64)
        self.excit_bound = np.zeros(p)
        for e, ((j, k), tf) in enumerate(items):
            self.src_ptr[k + 1] += 1
            self.e_tgt[e] = j
            self.e_b[e] = tf.support_b
            if tf.kind == "gamma":
                self.e_par[e] = tf.params
            else:
                basis = tf.spline_basis
                coefs = np.asarray(tf.params[1:])
                self.e_kind[e] = 1
                self.e_knots[e, :basis.knots.size] = basis.knots
                self.e_coef[e, :coefs.size] = coefs
                self.e_order[e] = basis.order
                self.e_dim[e] = coefs.size
            self.excit_bound[k] += tf.positive_sup()
        self.src_ptr = np.cumsum(self.src_ptr)
        self.bmax = model.support_b

    def background_args(self):
        return (self.bg_kind, self.bg_par, self.bg_knots, self.bg_coef, self.bg_order, self.bg_dim)

    def edge_args(self):
        return (self.src_ptr, self.e_tgt, self.e_kind, self.e_par, self.e_b, self.e_knots,
                self.e_coef, self.e_order, self.e_dim)


def _background_envelope(model: ModelSpec, delta: float):
    T = model.horizon_T
    ncell = int(math.ceil(T / delta))
    lo = delta * np.arange(ncell)
    hi = np.minimum(lo + delta, T)
    env = np.zeros(ncell)
    for bg in model.backgrounds:
        env += np.maximum(bg.sup_window(lo, hi), 0.0)
    return env


def simulate(model: ModelSpec, seed: int, max_rate: Optional[float] = None) -> EventData:
    """Exact sample of the relu-link Hawkes process on ``(0, T]``.

    Proposals come from a dominating rate ``M(t)`` equal to the background
    envelope over the current cell plus, for every event within the kernel
    support, the summed positive part of its outgoing kernels. A proposal at
    ``s`` is accepted with probability ``sum_j lambda_j(s) / M`` and attributed
    to node ``j`` with probability ``lambda_j(s) / sum_j lambda_j(s)``.
    History starts empty at ``t = 0``.
    """
    T = float(model.horizon_T)
    tab = _Tables(model)
    delta = min(max(tab.bmax, T / 200000.0), T / 50.0)
    env = _background_envelope(model, delta)
    if max_rate is None:
        nu_star = max(max(bg.upper for bg in model.backgrounds), 1e-12)
        lam_star = mean_intensity_bound(model, nu_star)
        max_rate = 1e4 * float(lam_star.sum()) + 1e6
    rng = np.random.Generator(np.random.Philox(seed))
    cap = max(1024, int(2 * env.sum() * delta) + 1024)
    ev_t = np.zeros(cap)
    ev_k = np.zeros(cap, dtype=np.int64)
    U = rng.random(_UNIFORM_CHUNK)
    t, n, lo, upos = 0.0, 0, 0, 0
    while True:
        status, t, n, lo, upos, rate = _kernels.thin(
            t, T, n, lo, ev_t, ev_k, U, upos, delta, env, tab.bmax, tab.excit_bound,
            float(max_rate), *tab.background_args(), *tab.edge_args())
        if status == _kernels.DONE:
            break
        if status == _kernels.NEED_UNIFORMS:
            U = rng.random(_UNIFORM_CHUNK)
            upos = 0
        elif status == _kernels.NEED_SPACE:
            ev_t = np.concatenate([ev_t, np.zeros(cap)])
            ev_k = np.concatenate([ev_k, np.zeros(cap, dtype=np.int64)])
            cap *= 2
        elif status == _kernels.DIVERGED:
            raise SimulationDivergedError(
                f"dominating rate {rate:.3g} exceeded {max_rate:.3g} at t={t:.6g}",
                {"t": t, "rate": rate, "n_events": n, "max_rate": max_rate})
        else:
            raise SimulationDivergedError(
                f"intensity {rate:.6g} exceeded the dominating rate at t={t:.6g}",
                {"t": t, "intensity": rate, "n_events": n})
    ev_t, ev_k = ev_t[:n], ev_k[:n]
    times = tuple(ev_t[ev_k == j] for j in range(model.p))
    prov = {"seed": int(seed), "model_hash": model.content_hash(), "method": "thinning"}
    if model.name:
        prov["model"] = model.name
    return EventData(model.p, T, times, prov)


# -- iterative construction ------------------------------------------------

class _PlanarField:
    """Unit-rate Poisson field on ``[0, T] x [0, inf)`` per node, realized in strips.

    Strip ``s`` of node ``j`` covers heights ``[s h, (s+1) h)`` and is drawn from a
    generator keyed by ``(seed, j, s)``, so every round sees the same points.
    """

    def __init__(self, p, T, seed, strip_height):
        self.p, self.T, self.seed, self.h = p, T, seed, strip_height
        self._strips = {}

    def strip(self, j, s):
        key = (j, s)
        if key not in self._strips:
            rng = np.random.default_rng([self.seed, j, s])
            n = rng.poisson(self.T * self.h)
            t = rng.uniform(0.0, self.T, n)
            y = self.h * (s + rng.uniform(0.0, 1.0, n))
            self._strips[key] = (t, y)
        return self._strips[key]

    def points(self, j, height):
        n_strips = int(math.ceil(height / self.h)) if height > 0 else 0
        if n_strips == 0:
            return np.zeros(0), np.zeros(0)
        ts, ys = zip(*(self.strip(j, s) for s in range(n_strips)))
        t, y = np.concatenate(ts), np.concatenate(ys)
        keep = (y <= height) & (t > 0)
        return t[keep], y[keep]


def linear_predictor(model: ModelSpec, history, j: int, t) -> np.ndarray:
    """``nu_j(t) + sum_k sum_{u in history[k], u < t} w_{j,k}(t - u)``."""
    t = np.asarray(t, dtype=float)
    out = np.asarray(model.backgrounds[j](t), dtype=float).copy()
    for (jj, k), tf in model.transfers.items():
        if jj != j or history[k].size == 0:
            continue
        ev = history[k]
        lo = np.searchsorted(ev, t - tf.support_b, side="left")
        hi = np.searchsorted(ev, t, side="left")
        width = hi - lo
        for r in range(int(width.max(initial=0))):
            sel = width > r
            out[sel] += tf(t[sel] - ev[lo[sel] + r])
    return out


def simulate_iterative(model: ModelSpec, n_iters: int, seed: int,
                       return_rounds: bool = False):
    """The fixed-point thinning sequence ``N^(1), ..., N^(n_iters)``.

    Round 1 keeps field points under ``h(nu_j(t))``; each later round keeps
    the points under ``h`` of the linear predictor driven by the previous
    round's events. Returns the last round (or all rounds).
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    T = float(model.horizon_T)
    p = model.p
    strip_h = max(max(bg.upper for bg in model.backgrounds), 1.0)
    field_ = _PlanarField(p, T, seed, strip_h)
    pos_sup = {}
    for (j, k), tf in model.transfers.items():
        pos_sup[(j, k)] = (tf.positive_sup(), tf.support_b)
    history = tuple(np.zeros(0) for _ in range(p))
    rounds = []
    for it in range(n_iters):
        new = []
        for j in range(p):
            bound = model.backgrounds[j].upper
            for (jj, k), (sup, b) in pos_sup.items():
                if jj == j and sup > 0 and history[k].size:
                    ev = history[k]
                    within = np.searchsorted(ev, ev + b, side="right") - np.arange(ev.size)
                    bound += sup * int(within.max())
            tj, yj = field_.points(j, max(bound, 0.0))
            if tj.size:
                lam = np.maximum(linear_predictor(model, history, j, tj), 0.0)
                acc = np.sort(tj[yj <= lam])
            else:
                acc = np.zeros(0)
            new.append(acc)
        history = tuple(new)
        rounds.append(EventData(p, T, history, {"seed": int(seed), "round": it + 1,
                                                "method": "iterative-thinning",
                                                "model_hash": model.content_hash()}))
    return rounds if return_rounds else rounds[-1]
