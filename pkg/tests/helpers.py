import numpy as np

from hawkesnet.design import DesignCache
from hawkesnet.spline_basis import make_basis


def synthetic_design(alpha, G, m0, m1, counts=None, T=1.0):
    """Wrap an arbitrary ``(alpha, G)`` pair as a design with step bases."""
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    p = (G.shape[0] - m0) // m1
    if alpha.shape[0] == 1 and p > 1:
        alpha = np.vstack([alpha] + [np.zeros_like(alpha)] * (p - 1))
    counts = np.ones(p, dtype=int) if counts is None else np.asarray(counts)
    return DesignCache(make_basis(1, m0, [0.0, 1.0]), make_basis(1, m1, [0.0, 0.01]), p, T,
                       alpha, np.asarray(G, dtype=float), counts)


def random_instance(seed, p, m0, m1, rows=None):
    rng = np.random.default_rng(seed)
    D = m0 + p * m1
    A = rng.normal(size=(rows or 4 * D, D))
    G = A.T @ A / A.shape[0]
    return rng.normal(size=D), G
