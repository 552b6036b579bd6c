"""Ground-truth generative models: backgrounds, transfer functions, presets.

Nodes are indexed from 0. A transfer keyed ``(j, k)`` is the effect of node
``k``'s events on node ``j``'s intensity, so ``(j, k)`` is an edge ``k -> j``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Tuple

import numpy as np
from scipy import integrate

from .errors import HawkesNetError, UnstableModelError
from .spline_basis import make_basis

Edge = Tuple[int, int]

# gamma-type kernel shape used by the presets: c * (x + 0.001) * exp(1 - 500 x)
PAPER_SHIFT = 0.001
PAPER_RATE = 500.0
PAPER_SUPPORT = 0.01
EXCITATORY_SCALE = 20000.0
INHIBITORY_SCALE = -15000.0

PRESETS = ("setting1_1", "setting1_2", "setting2", "setting3_1", "setting3_2")


@dataclass(frozen=True)
class TransferFunction:
    """Transfer function supported on ``[0, support_b]``.

    kinds
        ``gamma``: ``params = (scale, shift, rate)``,
        ``w(x) = scale * (x + shift) * exp(1 - rate * x)``.
        ``spline``: ``params = (order, c_1, ..., c_m)``, a clamped B-spline
        expansion on ``[0, support_b]``.
        ``zero``: identically zero.
    """

    kind: str
    params: tuple
    support_b: float

    def __post_init__(self):
        if self.kind not in ("gamma", "spline", "zero"):
            raise ValueError(f"unknown transfer kind {self.kind!r}")
        if not self.support_b > 0:
            raise ValueError("transfer support must be positive")
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        if self.kind == "gamma":
            if len(self.params) != 3 or self.params[1] < 0 or self.params[2] <= 0:
                raise ValueError("gamma transfer needs (scale, shift >= 0, rate > 0)")
        elif self.kind == "spline":
            order = int(self.params[0])
            if order < 1 or len(self.params) - 1 < order:
                raise ValueError("spline transfer needs (order, coefs...) with at least `order` coefs")

    @classmethod
    def gamma(cls, scale, shift=PAPER_SHIFT, rate=PAPER_RATE, support_b=PAPER_SUPPORT):
        return cls("gamma", (scale, shift, rate), support_b)

    @property
    def spline_basis(self):
        return make_basis(int(self.params[0]), len(self.params) - 1, (0.0, self.support_b))

    @property
    def sign(self) -> str:
        if self.kind == "zero":
            return "none"
        if self.kind == "gamma":
            s = self.params[0]
            return "excitatory" if s > 0 else ("inhibitory" if s < 0 else "none")
        c = np.asarray(self.params[1:])
        if np.all(c == 0):
            return "none"
        if np.all(c >= 0):
            return "excitatory"
        if np.all(c <= 0):
            return "inhibitory"
        return "mixed"

    @property
    def is_zero(self) -> bool:
        return self.sign == "none"

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = (x >= 0) & (x <= self.support_b)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "gamma":
            c, a, r = self.params
            xs = np.where(inside, x, 0.0)
            return np.where(inside, c * (xs + a) * np.exp(1.0 - r * xs), 0.0)
        flat = np.atleast_1d(x)
        out = self.spline_basis(flat) @ np.asarray(self.params[1:])
        return out.reshape(x.shape)

    def abs_integral(self) -> float:
        """Integral of ``|w|`` over the support."""
        if self.kind == "zero":
            return 0.0
        b = self.support_b
        if self.kind == "gamma":
            c, a, r = self.params
            e = math.exp(-r * b)
            first = (1.0 - e * (1.0 + r * b)) / r**2
            second = a * (1.0 - e) / r
            return abs(c) * math.e * (first + second)
        pts = self.spline_basis.breakpoints
        return float(sum(integrate.quad(lambda s: abs(float(self(s))), lo, hi, limit=200)[0]
                         for lo, hi in zip(pts[:-1], pts[1:])))

    def positive_sup(self) -> float:
        """An upper bound on ``max(w, 0)`` over the support (exact for ``gamma``)."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "gamma":
            c, a, r = self.params
            if c <= 0:
                return 0.0
            xs = min(max(1.0 / r - a, 0.0), self.support_b)
            return float(c * (xs + a) * math.exp(1.0 - r * xs))
        # convex-hull property of B-splines
        return max(0.0, max(self.params[1:]))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params), "support_b": self.support_b}

    @classmethod
    def from_dict(cls, d: Mapping) -> "TransferFunction":
        return cls(d["kind"], tuple(d["params"]), float(d["support_b"]))


@dataclass(frozen=True)
class BackgroundFunction:
    """Background intensity.

    kinds
        ``constant``: ``params = (c,)``.
        ``sinusoidal``: ``params = (offset, amplitude, frequency, horizon)``,
        ``nu(t) = offset + amplitude * sin(2 pi frequency t / horizon)``.
        ``spline``: ``params = (order, horizon, c_1, ..., c_m)`` on ``[0, horizon]``.
    """

    kind: str
    params: tuple

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(v) for v in self.params))
        if self.kind == "constant":
            ok = len(self.params) == 1 and self.params[0] >= 0
        elif self.kind == "sinusoidal":
            ok = len(self.params) == 4 and self.params[3] > 0
            if ok:
                off, amp = self.params[:2]
                ok = off - abs(amp) >= -1e-12 * max(1.0, abs(off))
        elif self.kind == "spline":
            ok = len(self.params) >= 3 and min(self.params[2:]) >= 0
        else:
            raise ValueError(f"unknown background kind {self.kind!r}")
        if not ok:
            raise ValueError(f"invalid or negative {self.kind} background: {self.params}")

    @classmethod
    def constant(cls, c):
        return cls("constant", (c,))

    @classmethod
    def sinusoid(cls, offset, amplitude, horizon, frequency=1.0):
        return cls("sinusoidal", (offset, amplitude, frequency, horizon))

    @property
    def upper(self) -> float:
        """Bound ``nu`` with ``nu(t) <= nu`` for all t."""
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "sinusoidal":
            return self.params[0] + abs(self.params[1])
        return max(self.params[2:])

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full(t.shape, self.params[0])
        if self.kind == "sinusoidal":
            off, amp, f, H = self.params
            return off + amp * np.sin(2.0 * np.pi * f * t / H)
        order, H = int(self.params[0]), self.params[1]
        basis = make_basis(order, len(self.params) - 2, (0.0, H))
        out = basis(np.atleast_1d(t)) @ np.asarray(self.params[2:])
        return out.reshape(t.shape)

    def sup_window(self, t0, t1) -> np.ndarray:
        """Upper bound of ``nu`` over each window ``[t0, t1]`` (exact unless spline)."""
        t0 = np.asarray(t0, dtype=float)
        t1 = np.asarray(t1, dtype=float)
        if self.kind == "constant":
            return np.full(np.broadcast(t0, t1).shape, self.params[0])
        if self.kind == "sinusoidal":
            off, amp, f, H = self.params
            if amp == 0:
                return np.full(np.broadcast(t0, t1).shape, off)
            w = 2.0 * np.pi * f / H
            # crest of amp*sin(theta) sits at pi/2 (amp > 0) or 3pi/2 (amp < 0)
            crest = 0.5 * np.pi if amp > 0 else 1.5 * np.pi
            th0, th1 = w * t0, w * t1
            n = np.ceil((th0 - crest) / (2.0 * np.pi))
            has_crest = crest + 2.0 * np.pi * n <= th1
            ends = np.maximum(self(t0), self(t1))
            return np.where(has_crest, off + abs(amp), ends)
        order, H = int(self.params[0]), self.params[1]
        coefs = np.asarray(self.params[2:])
        basis = make_basis(order, coefs.size, (0.0, H))
        kn = basis.knots
        # basis i is supported on [kn[i], kn[i+order]]
        lo = kn[:coefs.size]
        hi = kn[order:order + coefs.size]
        t0f, t1f = np.atleast_1d(t0), np.atleast_1d(t1)
        overlap = (lo[None, :] <= t1f[:, None]) & (hi[None, :] >= t0f[:, None])
        out = np.where(overlap, coefs[None, :], -np.inf).max(axis=1)
        return out.reshape(np.broadcast(t0, t1).shape)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "BackgroundFunction":
        return cls(d["kind"], tuple(d["params"]))


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A multivariate Hawkes model with relu link.

    ``transfers`` maps ``(j, k)`` to the transfer function of ``k -> j``.
    Identically-zero transfers are dropped at construction. The linear
    dominating process (``|w|`` kernels) must have spectral radius < 1.
    """

    p: int
    horizon_T: float
    backgrounds: tuple
    transfers: Dict[Edge, TransferFunction] = field(default_factory=dict)
    link: str = "relu"
    alphas: Optional[tuple] = None
    name: Optional[str] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be positive")
        if not self.horizon_T > 0:
            raise ValueError("horizon_T must be positive")
        if self.link != "relu":
            raise ValueError("only the relu link h(x) = max(0, x) is supported")
        bgs = tuple(self.backgrounds)
        if len(bgs) != self.p:
            raise ValueError(f"expected {self.p} backgrounds, got {len(bgs)}")
        object.__setattr__(self, "backgrounds", bgs)
        clean = {}
        for (j, k), tf in dict(self.transfers).items():
            j, k = int(j), int(k)
            if not (0 <= j < self.p and 0 <= k < self.p):
                raise ValueError(f"edge {(j, k)} out of range for p={self.p}")
            if not tf.is_zero:
                clean[(j, k)] = tf
        object.__setattr__(self, "transfers", dict(sorted(clean.items())))
        if self.alphas is not None:
            object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        rho = self.spectral_radius
        if not rho < 1.0:
            raise UnstableModelError(
                f"spectral radius of the |transfer| integral matrix is {rho:.4f} >= 1")

    @property
    def edge_set(self) -> frozenset:
        return frozenset(self.transfers)

    @property
    def support_b(self) -> float:
        if not self.transfers:
            return PAPER_SUPPORT
        return max(tf.support_b for tf in self.transfers.values())

    @property
    def spectral_radius(self) -> float:
        om = omega_matrix(self)
        if not om.any():
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(om))))

    @property
    def sigma_max(self) -> float:
        """Largest eigenvalue of ``Omega^T Omega`` (diagnostic only)."""
        om = omega_matrix(self)
        return float(np.linalg.norm(om, 2) ** 2)

    def background(self, j: int, t) -> np.ndarray:
        return self.backgrounds[j](t)

    def transfer(self, j: int, k: int) -> TransferFunction:
        return self.transfers.get((j, k), TransferFunction("zero", (), self.support_b))

    def to_dict(self) -> dict:
        return {
            "format": "hawkesnet.model/1",
            "p": self.p,
            "horizon_T": self.horizon_T,
            "link": self.link,
            "name": self.name,
            "seed": self.seed,
            "alphas": None if self.alphas is None else list(self.alphas),
            "backgrounds": [bg.to_dict() for bg in self.backgrounds],
            "transfers": [{"target": j, "source": k, **tf.to_dict()}
                          for (j, k), tf in self.transfers.items()],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelSpec":
        transfers = {(int(e["target"]), int(e["source"])): TransferFunction.from_dict(e)
                     for e in d.get("transfers", [])}
        return cls(
            p=int(d["p"]),
            horizon_T=float(d["horizon_T"]),
            backgrounds=tuple(BackgroundFunction.from_dict(b) for b in d["backgrounds"]),
            transfers=transfers,
            link=d.get("link", "relu"),
            alphas=d.get("alphas"),
            name=d.get("name"),
            seed=d.get("seed"),
        )

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, text_or_path) -> "ModelSpec":
        text = str(text_or_path)
        if not text.lstrip().startswith("{"):
            with open(text) as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))

    def content_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def omega_matrix(model: ModelSpec) -> np.ndarray:
    """``Omega[j, k]`` = integral of ``|w_{j,k}|``."""
    om = np.zeros((model.p, model.p))
    for (j, k), tf in model.transfers.items():
        om[j, k] = tf.abs_integral()
    return om


def mean_intensity_bound(model: ModelSpec, nu_star: float) -> np.ndarray:
    """Mean intensity ``(I - Omega)^{-1} nu_star 1`` of the dominating linear process."""
    om = omega_matrix(model)
    if om.any() and not np.max(np.abs(np.linalg.eigvals(om))) < 1.0:
        raise UnstableModelError("dominating process has no finite mean intensity")
    return np.linalg.solve(np.eye(model.p) - om, np.full(model.p, float(nu_star)))


def random_network(kind: str, p: int, seed: int, p_e: Optional[float] = None,
                   alpha: Optional[float] = None) -> frozenset:
    """Random directed edge set without self-loops.

    ``erdos_renyi`` includes each ordered pair independently with probability
    ``p_e``. ``power_law`` draws each source's out-degree from
    ``P(d) ~ d^-(alpha + 1)`` on ``{1, ..., p-1}`` and picks its targets
    uniformly without replacement. Edges are returned as ``(target, source)``.
    """
    rng = np.random.default_rng(seed)
    if kind == "erdos_renyi":
        if p_e is None or not 0.0 <= p_e <= 1.0:
            raise ValueError(f"edge probability must lie in [0, 1], got {p_e}")
        draw = rng.random((p, p)) < p_e
        np.fill_diagonal(draw, False)
        return frozenset((int(j), int(k)) for j, k in zip(*np.nonzero(draw)))
    if kind == "power_law":
        if alpha is None or not alpha > 0:
            raise ValueError(f"power-law parameter must be positive, got {alpha}")
        if p < 2:
            return frozenset()
        d = np.arange(1, p)
        pmf = d ** -(alpha + 1.0)
        cdf = np.cumsum(pmf / pmf.sum())
        edges = set()
        for k in range(p):
            deg = int(d[min(np.searchsorted(cdf, rng.random(), side="right"), p - 2)])
            others = np.delete(np.arange(p), k)
            for j in rng.choice(others, size=deg, replace=False):
                edges.add((int(j), k))
        return frozenset(edges)
    raise ValueError(f"unknown network kind {kind!r}")


def _setting1_network(mixed: bool) -> Dict[Edge, TransferFunction]:
    out = {}
    for k in range(1, 11):
        scale = INHIBITORY_SCALE if (mixed and k >= 6) else EXCITATORY_SCALE
        out[(0, k)] = TransferFunction.gamma(scale)
    return out


def preset(name: str, p: Optional[int] = None, T: float = 10.0, seed: int = 0,
           edges: Optional[Iterable[Edge]] = None, rho: float = 1.0,
           frequency: Optional[float] = None, p_e: float = 0.025) -> ModelSpec:
    """The simulation settings of the reference study.

    ``setting1_1``/``setting1_2``: p = 21, node 0 receives edges from nodes
    1..10 (all excitatory, or 1..5 excitatory and 6..10 inhibitory).
    ``setting2``: ``p`` nodes on ``edges`` (Erdos-Renyi with ``p_e`` when not
    given), each edge excitatory or inhibitory with probability 1/2.
    ``setting3_1``/``setting3_2``: the setting1_2 network with constant or
    ``alpha (1 + rho sin)`` backgrounds.
    """
    if name not in PRESETS:
        raise HawkesNetError(f"unknown preset {name!r}; choose from {PRESETS}")
    rng = np.random.default_rng(seed)
    T = float(T)
    if name in ("setting1_1", "setting1_2"):
        p = 21 if p is None else int(p)
        if p != 21:
            raise ValueError(f"{name} is defined for p = 21")
        f = 1.0 if frequency is None else frequency
        alphas = rng.normal(30.0, 5.0, size=p)
        alphas[0] = 60.0
        bgs = [BackgroundFunction.sinusoid(60.0, 50.0, T, f)]
        bgs += [BackgroundFunction.sinusoid(a, a, T, f) for a in alphas[1:]]
        transfers = _setting1_network(mixed=name == "setting1_2")
    elif name == "setting2":
        p = 100 if p is None else int(p)
        f = 5.0 if frequency is None else frequency
        if edges is None:
            edges = random_network("erdos_renyi", p, seed, p_e=p_e)
        alphas = rng.normal(100.0, 5.0, size=p)
        bgs = [BackgroundFunction.sinusoid(a, a, T, f) for a in alphas]
        edges = sorted(edges)
        signs = rng.random(len(edges)) < 0.5
        transfers = {e: TransferFunction.gamma(EXCITATORY_SCALE if s else INHIBITORY_SCALE)
                     for e, s in zip(edges, signs)}
    else:
        p = 21 if p is None else int(p)
        if p != 21:
            raise ValueError(f"{name} is defined for p = 21")
        f = 1.0 if frequency is None else frequency
        alphas = rng.normal(50.0, 5.0, size=p)
        if name == "setting3_1":
            bgs = [BackgroundFunction.constant(a) for a in alphas]
        else:
            bgs = [BackgroundFunction.sinusoid(a, rho * a, T, f) for a in alphas]
        transfers = _setting1_network(mixed=True)
    return ModelSpec(p=p, horizon_T=T, backgrounds=tuple(bgs), transfers=transfers,
                     alphas=tuple(alphas), name=name, seed=seed)
