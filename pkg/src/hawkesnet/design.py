"""Regression statistics of the least-squares loss: target vectors and Gram matrix.

Coefficients of node ``j`` are laid out as ``[beta_0 | beta_1 | ... | beta_p]``:
``beta_0`` (length ``m0``) expands the background in ``phi_0`` and ``beta_k``
(length ``m1``) expands the transfer from node ``k`` (0-based) in ``phi_1``.
The matching feature vector is ``Psi(t) = [phi_0(t), Psi_0(t), ..., Psi_{p-1}(t)]``
with ``Psi_k(t) = sum_{u in N_k, u < t} phi_1(t - u)``.

The loss of node ``j`` is ``-2 beta^T alpha_j + beta^T G beta`` where
``alpha_j = (1/T) sum_{t in N_j} Psi(t)`` and ``G = (1/T) int_0^T Psi Psi^T dt``.

``G`` is computed exactly by default. Every block is an integral of products
of piecewise polynomials:

* ``G00`` is the Gram of ``phi_0``;
* ``G0k`` is a sum over events of ``int phi_0(t) phi_1(t - u)^T dt``, done with
  Gauss rules on the polynomial pieces;
* ``Gkk'`` is a sum over event pairs of the lag cross-Gram
  ``C(d) = int phi_1(s) phi_1(s - d)^T ds``, which is a piecewise polynomial in
  the lag ``d``. Its coefficients are fitted once and the pairs only
  contribute Legendre moments.

``method="midpoint"`` instead integrates ``Psi Psi^T`` with the composite
midpoint rule on a uniform grid (with ``G00`` still exact); it is kept as an
independent cross-check.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidDimensionError, NumericError, ResolutionError
from .simulator import EventData
from .spline_basis import (SplineBasis, constant_background_basis, gauss_legendre,
                           make_basis)

_MAGIC = b"HKNDSGN\x00"
_VERSION = 1
_PAIR_CHUNK = 1 << 21


@dataclass(frozen=True, eq=False)
class DesignCache:
    """Per-node targets ``alpha`` (``p x D``) and the shared Gram ``G`` (``D x D``)."""

    basis0: SplineBasis
    basis1: SplineBasis
    p: int
    horizon_T: float
    alpha: np.ndarray = field(repr=False)
    G: np.ndarray = field(repr=False)
    event_counts: np.ndarray
    method: str = "exact"
    grid_resolution: Optional[float] = None

    def __post_init__(self):
        for name in ("alpha", "G", "event_counts"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (np.all(np.isfinite(self.alpha)) and np.all(np.isfinite(self.G))):
            raise NumericError("design contains non-finite values")

    @property
    def m0(self) -> int:
        return self.basis0.dim

    @property
    def m1(self) -> int:
        return self.basis1.dim

    @property
    def support_b(self) -> float:
        return self.basis1.b

    @property
    def dim(self) -> int:
        return self.m0 + self.p * self.m1

    def group_slice(self, g: int) -> slice:
        """Coefficient slice of group ``g``: 0 is the background, ``k + 1`` is node ``k``."""
        if g == 0:
            return slice(0, self.m0)
        start = self.m0 + (g - 1) * self.m1
        return slice(start, start + self.m1)

    def block(self, g1: int, g2: int) -> np.ndarray:
        return self.G[self.group_slice(g1), self.group_slice(g2)]

    def features(self, events: EventData, t) -> np.ndarray:
        """``Psi(t)`` for the data this design was built from, shape ``(len(t), D)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.hstack([self.basis0(t), feature_matrix(events, self.basis1, t)])

    # -- binary dump -----------------------------------------------------
    def _meta(self) -> dict:
        def bdesc(b):
            return {"order": b.order, "dim": b.dim, "interval": list(b.interval),
                    "constant_first": b.constant_first}
        return {"basis0": bdesc(self.basis0), "basis1": bdesc(self.basis1), "p": self.p,
                "horizon_T": self.horizon_T, "event_counts": self.event_counts.tolist(),
                "method": self.method, "grid_resolution": self.grid_resolution}

    def to_bytes(self) -> bytes:
        meta = json.dumps(self._meta(), sort_keys=True).encode()
        buf = io.BytesIO()
        buf.write(_MAGIC)
        buf.write(struct.pack("<II", _VERSION, len(meta)))
        buf.write(meta)
        buf.write(np.ascontiguousarray(self.alpha, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(self.G, dtype="<f8").tobytes())
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "DesignCache":
        if data[:len(_MAGIC)] != _MAGIC:
            raise ValueError("not a design cache file")
        off = len(_MAGIC)
        version, n = struct.unpack_from("<II", data, off)
        if version != _VERSION:
            raise ValueError(f"unsupported design cache version {version}")
        off += 8
        meta = json.loads(data[off:off + n])
        off += n

        def mk(d):
            b = make_basis(d["order"], d["dim"], d["interval"])
            if d["constant_first"]:
                b = constant_background_basis(d["dim"], d["interval"], d["order"])
            return b
        b0, b1 = mk(meta["basis0"]), mk(meta["basis1"])
        p = meta["p"]
        D = b0.dim + p * b1.dim
        flat = np.frombuffer(data, dtype="<f8", offset=off)
        if flat.size != p * D + D * D:
            raise ValueError("design cache payload has the wrong size")
        return cls(b0, b1, p, meta["horizon_T"], flat[:p * D].reshape(p, D).copy(),
                   flat[p * D:].reshape(D, D).copy(), np.array(meta["event_counts"]),
                   meta["method"], meta["grid_resolution"])

    @classmethod
    def load(cls, path) -> "DesignCache":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


# -- features -----------------------------------------------------------------

def compute_features(events: EventData, basis1: SplineBasis, t: float) -> np.ndarray:
    """``[Psi_0(t), ..., Psi_{p-1}(t)]`` at a single time, length ``p * m1``."""
    return feature_matrix(events, basis1, np.array([t], dtype=float))[0]


def feature_matrix(events: EventData, basis1: SplineBasis, t) -> np.ndarray:
    """Convolution features at many times, shape ``(len(t), p * m1)``.

    Events of node ``k`` contribute when ``0 < t - u <= b``; each node's window
    is located by binary search in its sorted event list.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    m1, b, l1 = basis1.dim, basis1.b, basis1.order
    out = np.zeros((t.size, events.p * m1))
    rows = np.arange(t.size)
    for k, ev in enumerate(events.times):
        if ev.size == 0:
            continue
        lo = np.searchsorted(ev, t - b, side="left")
        hi = np.searchsorted(ev, t, side="left")
        width = hi - lo
        for r in range(int(width.max(initial=0))):
            sel = width > r
            lag = t[sel] - ev[lo[sel] + r]
            vals, first, inside = basis1.evaluate_local(lag)
            cols = k * m1 + first[:, None] + np.arange(l1)[None, :]
            np.add.at(out, (rows[sel][:, None], cols), vals * inside[:, None])
    return out


# -- exact construction ---------------------------------------------------------

def _std_basis(basis: SplineBasis) -> SplineBasis:
    return make_basis(basis.order, basis.dim, basis.interval)


def _constant_transform(basis: SplineBasis) -> np.ndarray:
    """Matrix ``R`` with ``basis(t) = R @ standard_basis(t)``."""
    R = np.eye(basis.dim)
    if basis.constant_first:
        R[0, :] = 1.0
    return R


def _local_scatter(basis: SplineBasis, t):
    """Local values and their column indices, zeroed outside the interval."""
    vals, first, inside = basis.evaluate_local(t)
    cols = first[:, None] + np.arange(basis.order)[None, :]
    return vals * inside[:, None], cols


def lag_cross_gram(basis1: SplineBasis, d: float, upper: Optional[float] = None) -> np.ndarray:
    """``int_d^upper phi_1(s) phi_1(s - d)^T ds`` (``upper`` defaults to ``b``)."""
    up = None if upper is None else np.array([upper], dtype=float)
    return lag_cross_grams(basis1, np.array([d], dtype=float), up)[0]


def lag_cross_grams(basis1: SplineBasis, d: np.ndarray, upper: Optional[np.ndarray] = None,
                    chunk: int = 4096) -> np.ndarray:
    """Vectorized :func:`lag_cross_gram`, shape ``(len(d), m1, m1)``.

    Each integral is cut at the knots of both factors; cut points are clamped
    into ``[d, upper]`` so surplus pieces have zero width.
    """
    d = np.asarray(d, dtype=float)
    b = basis1.b
    upper = np.full(d.shape, b) if upper is None else np.minimum(np.asarray(upper, float), b)
    m1 = basis1.dim
    out = np.zeros((d.size, m1, m1))
    bp = basis1.breakpoints
    x, w = gauss_legendre(basis1.order + 1)
    for s in range(0, d.size, chunk):
        dd, uu = d[s:s + chunk], upper[s:s + chunk]
        hi = np.maximum(uu, dd)
        cuts = np.concatenate([bp[None, :] + 0 * dd[:, None], bp[None, :] + dd[:, None]], axis=1)
        cuts = np.sort(np.clip(cuts, dd[:, None], hi[:, None]), axis=1)
        lo_, hi_ = cuts[:, :-1], cuts[:, 1:]
        width = hi_ - lo_
        pts = lo_[:, :, None] + width[:, :, None] * x[None, None, :]
        wts = (width[:, :, None] * w[None, None, :]).reshape(dd.size, -1)
        pts = pts.reshape(dd.size, -1)
        A = basis1(pts.ravel()).reshape(dd.size, -1, m1)
        B = basis1((pts - dd[:, None]).ravel()).reshape(dd.size, -1, m1)
        out[s:s + chunk] = np.einsum("nq,nqa,nqb->nab", wts, A, B)
    return out


def _legendre_table(x: np.ndarray, n: int) -> np.ndarray:
    """``P_q(2x - 1)`` for ``q < n``, shape ``(len(x), n)``."""
    y = 2.0 * x - 1.0
    P = np.empty((x.size, n))
    P[:, 0] = 1.0
    if n > 1:
        P[:, 1] = y
    for q in range(2, n):
        P[:, q] = ((2 * q - 1) * y * P[:, q - 1] - (q - 1) * P[:, q - 2]) / q
    return P


def _lag_polynomials(basis1: SplineBasis):
    """Legendre coefficients of ``C(d)`` on each lag interval of width ``h``.

    Returns ``coef`` of shape ``(R, n, m1, m1)`` with
    ``C((r + x) h) = sum_q coef[r, q] P_q(2x - 1)`` for ``x`` in ``[0, 1]``.
    """
    R = basis1.n_interior + 1
    h = basis1.span_width
    n = 2 * basis1.order
    xg, wg = gauss_legendre(n)
    P = _legendre_table(xg, n)
    m1 = basis1.dim
    coef = np.zeros((R, n, m1, m1))
    Cs = lag_cross_grams(basis1, ((np.arange(R)[:, None] + xg[None, :]) * h).ravel())
    Cs = Cs.reshape(R, n, m1, m1)
    for q in range(n):
        coef[:, q] = (2 * q + 1) * np.einsum("g,rgab->rab", wg * P[:, q], Cs)
    return coef


def _event_pairs(tt: np.ndarray, b: float):
    """Yield index arrays ``(i, i2)`` with ``i < i2`` and ``tt[i2] - tt[i] <= b``."""
    n = tt.size
    off = 1
    while off < n:
        d = tt[off:] - tt[:-off]
        idx = np.nonzero(d <= b)[0]
        if idx.size == 0:
            break
        for s in range(0, idx.size, _PAIR_CHUNK):
            i = idx[s:s + _PAIR_CHUNK]
            yield i, i + off
        off += 1


def _background_targets(tt, kk, p, b0: SplineBasis) -> np.ndarray:
    """``sum_{t in N_j} phi_0(t)`` per node, shape ``(p, m0)``."""
    m0 = b0.dim
    vals, cols = _local_scatter(b0, tt)
    key = (kk[:, None] * m0 + cols).ravel()
    return np.bincount(key, vals.ravel(), minlength=p * m0).reshape(p, m0)


def _transfer_blocks(tt, kk, p, T, b1: SplineBasis):
    """Transfer targets ``(p, p m1)`` and transfer Gram ``(p m1, p m1)``, unscaled."""
    m1, l1, b = b1.dim, b1.order, b1.b
    R = b1.n_interior + 1
    h = b1.span_width
    nq = 2 * l1
    coef = _lag_polynomials(b1)
    mom = np.zeros(p * p * R * nq)
    at = np.zeros(p * p * m1)
    G_tt = np.zeros((p, p, m1, m1))
    trunc = tt > T - b
    for i, i2 in _event_pairs(tt, b):
        d = tt[i2] - tt[i]
        a, c = kk[i], kk[i2]
        strict = d > 0
        v, cl = _local_scatter(b1, d[strict])
        key = ((c[strict] * p + a[strict])[:, None] * m1 + cl).ravel()
        at += np.bincount(key, v.ravel(), minlength=p * p * m1)
        regular = ~trunc[i] & (d < b)
        if np.any(regular):
            dr = d[regular]
            r = np.minimum((dr / h).astype(np.int64), R - 1)
            x = dr / h - r
            P = _legendre_table(x, nq)
            key = (((a[regular] * p + c[regular]) * R + r)[:, None] * nq
                   + np.arange(nq)[None, :]).ravel()
            mom += np.bincount(key, P.ravel(), minlength=mom.size)
        tr = trunc[i]
        if np.any(tr):
            C = lag_cross_grams(b1, d[tr], T - tt[i[tr]])
            np.add.at(G_tt, (kk[i[tr]], kk[i2[tr]]), C)
            np.add.at(G_tt, (kk[i2[tr]], kk[i[tr]]), C.transpose(0, 2, 1))
    blk = np.einsum("acrq,rqxy->acxy", mom.reshape(p, p, R, nq), coef)
    G_tt += blk + blk.transpose(1, 0, 3, 2)
    # each event paired with itself
    C0 = lag_cross_gram(b1, 0.0)
    for k in range(p):
        reg = kk == k
        G_tt[k, k] += np.count_nonzero(reg & ~trunc) * C0
        late = tt[reg & trunc]
        if late.size:
            G_tt[k, k] += lag_cross_grams(b1, np.zeros(late.size), T - late).sum(axis=0)
    return at.reshape(p, p * m1), G_tt.transpose(0, 2, 1, 3).reshape(p * m1, p * m1)


def _background_transfer(tt, kk, p, T, b0, b1) -> np.ndarray:
    """``sum_{u in N_k} int phi_0(t) phi_1(t - u)^T dt`` for all ``k``, shape ``(m0, p m1)``."""
    m0, m1 = b0.dim, b1.dim
    R = b1.n_interior + 1
    h = b1.span_width
    nq = max(b0.order, b1.order) + 1
    xq, wq = gauss_legendre(nq)
    span_lo = h * np.arange(R)
    lags = span_lo[:, None] + h * xq[None, :]                    # (R, nq)
    phi1 = b1(lags.ravel()).reshape(R, nq, m1)
    bp0 = b0.breakpoints
    out = np.zeros((m0, p * m1))
    if tt.size == 0:
        return out
    lo = tt[:, None] + span_lo[None, :]                          # (n, R)
    hi = lo + h
    # a piece is regular when it ends by T and no background knot lies strictly inside
    n_knots_inside = (np.searchsorted(bp0, hi, side="left")
                      - np.searchsorted(bp0, lo, side="right"))
    regular = (hi <= T) & (n_knots_inside == 0)
    ev, sp = np.nonzero(regular)
    if ev.size:
        t = (lo[ev, sp][:, None] + h * xq[None, :]).ravel()
        vals, cols = _local_scatter(b0, t)
        grp = np.repeat((kk[ev] * R + sp) * nq, nq) + np.tile(np.arange(nq), ev.size)
        key = (grp[:, None] * m0 + cols).ravel()
        A = np.bincount(key, vals.ravel(), minlength=p * R * nq * m0).reshape(p, R, nq, m0)
        blk = np.einsum("kiqa,iqb->akb", A * (h * wq)[None, None, :, None], phi1)
        out += blk.reshape(m0, p * m1)
    ev, sp = np.nonzero(~regular & (lo < T))
    if ev.size:
        a = lo[ev, sp]
        z = np.minimum(hi[ev, sp], T)
        first = np.searchsorted(bp0, a, side="right")
        J = int(np.max(np.searchsorted(bp0, z, side="left") - first, initial=0))
        inner = bp0[np.minimum(first[:, None] + np.arange(J)[None, :], bp0.size - 1)]
        cuts = np.sort(np.clip(np.concatenate([a[:, None], inner, z[:, None]], axis=1),
                               a[:, None], z[:, None]), axis=1)
        c0, c1 = cuts[:, :-1], cuts[:, 1:]
        t = (c0[:, :, None] + (c1 - c0)[:, :, None] * xq[None, None, :]).reshape(ev.size, -1)
        w = ((c1 - c0)[:, :, None] * wq[None, None, :]).reshape(ev.size, -1)
        F0 = b0(t.ravel()).reshape(ev.size, -1, m0)
        F1 = b1((t - tt[ev][:, None]).ravel()).reshape(ev.size, -1, m1)
        contrib = np.einsum("nq,nqa,nqb->nab", w, F0, F1)
        blk = np.zeros((p, m0, m1))
        np.add.at(blk, kk[ev], contrib)
        out += blk.transpose(1, 0, 2).reshape(m0, p * m1)
    return out


def _midpoint_blocks(events: EventData, b0: SplineBasis, b1: SplineBasis, delta: float,
                     block_size: int = 4096):
    """Unscaled ``G`` by the composite midpoint rule with ``G00`` exact."""
    T = events.horizon_T
    n = int(math.ceil(T / delta - 1e-9))
    step = T / n
    m0 = b0.dim
    D = m0 + events.p * b1.dim
    G = np.zeros((D, D))
    for s in range(0, n, block_size):
        t = (np.arange(s, min(s + block_size, n)) + 0.5) * step
        F = np.hstack([b0(t), feature_matrix(events, b1, t)])
        G += step * (F.T @ F)
    G[:m0, :m0] = b0.gram()
    return G


def default_grid_resolution(m1: int, support_b: float, T: float) -> float:
    return min(support_b / (4.0 * m1), T / 5000.0)


class DesignBuilder:
    """Builds designs for several basis dimensions on the same data.

    The event-pair work depends only on the transfer basis and is memoized
    per ``m1``, so sweeping ``m0`` is cheap.
    """

    def __init__(self, events: EventData, support_b: float, degree0: int = 4,
                 degree1: int = 4):
        if not support_b > 0:
            raise InvalidDimensionError("support_b must be positive")
        self.events = events
        self.support_b = float(support_b)
        self.degree0 = degree0
        self.degree1 = degree1
        self._tt, self._kk = events.merged()
        self._transfer = {}

    def _transfer_part(self, b1: SplineBasis):
        if b1.dim not in self._transfer:
            self._transfer[b1.dim] = _transfer_blocks(self._tt, self._kk, self.events.p,
                                                      self.events.horizon_T, b1)
        return self._transfer[b1.dim]

    def build(self, m0: int, m1: int, constant_background: bool = False,
              method: str = "exact", grid_resolution: Optional[float] = None) -> DesignCache:
        ev = self.events
        T, p = ev.horizon_T, ev.p
        b1 = make_basis(self.degree1, m1, (0.0, self.support_b))
        b0 = (constant_background_basis(m0, (0.0, T), self.degree0) if constant_background
              else make_basis(self.degree0, m0, (0.0, T)))
        b0s = _std_basis(b0)
        if grid_resolution is None:
            grid_resolution = default_grid_resolution(m1, self.support_b, T)
        if not grid_resolution > 0:
            raise ResolutionError("grid resolution must be positive")
        D = m0 + p * m1
        alpha = np.zeros((p, D))
        alpha[:, :m0] = _background_targets(self._tt, self._kk, p, b0s)
        if method == "exact":
            at, G_tt = self._transfer_part(b1)
            alpha[:, m0:] = at
            G = np.zeros((D, D))
            G[:m0, :m0] = b0s.gram()
            G[m0:, m0:] = G_tt
            G[:m0, m0:] = _background_transfer(self._tt, self._kk, p, T, b0s, b1)
            G[m0:, :m0] = G[:m0, m0:].T
        elif method == "midpoint":
            min_span = min(b1.span_width, b0.span_width)
            if grid_resolution > min_span / 4.0:
                raise ResolutionError(
                    f"grid resolution {grid_resolution:g} exceeds a quarter of the smallest "
                    f"knot span {min_span:g}")
            alpha = _targets(ev, b0s, b1)
            G = _midpoint_blocks(ev, b0s, b1, grid_resolution)
        else:
            raise ValueError(f"unknown design method {method!r}")
        Rm = _constant_transform(b0)
        alpha[:, :m0] = alpha[:, :m0] @ Rm.T
        G[:m0, :] = Rm @ G[:m0, :]
        G[:, :m0] = G[:, :m0] @ Rm.T
        G = 0.5 * (G + G.T) / T
        return DesignCache(b0, b1, p, T, alpha / T, G, ev.counts, method,
                           float(grid_resolution))


def build_design(events: EventData, m0: int, m1: int, support_b: float,
                 grid_resolution: Optional[float] = None, degree0: int = 4,
                 degree1: int = 4, method: str = "exact",
                 constant_background: bool = False) -> DesignCache:
    """Assemble ``alpha`` and ``G`` for all nodes.

    Parameters
    ----------
    events : EventData
    m0, m1 : int
        Dimensions of the background basis on ``[0, T]`` and the transfer
        basis on ``[0, support_b]``.
    support_b : float
        Transfer-function support.
    grid_resolution : float, optional
        Midpoint grid spacing for ``method="midpoint"``; defaults to
        ``min(b / (4 m1), T / 5000)``. Recorded but unused by the exact method.
    degree0, degree1 : int
        Spline orders (1 = step functions, 4 = cubic).
    method : {"exact", "midpoint"}
    constant_background : bool
        Use a background basis whose first element is the constant 1.
    """
    return DesignBuilder(events, support_b, degree0, degree1).build(
        m0, m1, constant_background, method, grid_resolution)


def _targets(events: EventData, b0: SplineBasis, b1: SplineBasis) -> np.ndarray:
    """Unscaled ``alpha`` only, by direct feature evaluation at event times."""
    p = events.p
    m0 = b0.dim
    alpha = np.zeros((p, m0 + p * b1.dim))
    for j, ev in enumerate(events.times):
        if ev.size:
            alpha[j, :m0] = b0(ev).sum(axis=0)
            alpha[j, m0:] = feature_matrix(events, b1, ev).sum(axis=0)
    return alpha
