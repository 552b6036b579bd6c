"""Test of a constant background intensity for one node.

The background is expanded in a basis whose first element is the constant 1,
with inflated ("under-smoothed") dimensions. The statistic compares the
least-squares loss of the refit on the selected edges with the refit whose
background is restricted to the constant:

    S_j = T * (loss(beta_H0) - loss(beta_1)),

and ``S_j / lambda_bar_j`` is referred to a chi-square law with
``m0_test - 1`` degrees of freedom.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy import special

from .design import DesignCache, build_design
from .errors import InternalInconsistencyError, UndefinedKappaError
from .estimator import DEFAULT_TOL, refit
from .selection import DEFAULT_N_GRID, select_eta
from .simulator import EventData
from .spline_basis import constant_background_basis  # noqa: F401  (re-export)

__all__ = ["BackgroundTest", "TestConfig", "chi_square_upper_tail", "constant_background_basis",
           "test_background", "test_all_nodes", "undersmoothed_dims"]


@dataclass(frozen=True)
class TestConfig:
    """Knobs of the background test.

    ``undersmooth_exponent``: dimensions are multiplied by ``T ** exponent``
    and rounded up. ``alpha_level``: rejection level for ``reject``.
    ``grid_resolution``: when set, the transfer blocks of ``G`` use the
    midpoint rule with this step instead of exact integration.
    """

    __test__ = False

    undersmooth_exponent: float = 1.0 / 20.0
    degree0: int = 4
    degree1: int = 4
    n_grid: int = DEFAULT_N_GRID
    alpha_T: Optional[float] = None
    s0: Optional[int] = None
    alpha_level: float = 0.05
    tol: float = DEFAULT_TOL
    clamp_rel: float = 1e-8
    grid_resolution: Optional[float] = None


@dataclass(frozen=True)
class BackgroundTest:
    node_j: int
    S_j: float
    lambda_bar: float
    dof: int
    statistic: float
    p_value: float
    m0_test: int
    m1_test: int
    support: frozenset = field(default_factory=frozenset)
    reject: bool = False

    def as_row(self) -> dict:
        d = asdict(self)
        d["support"] = " ".join(str(k) for k in sorted(self.support))
        return d


def chi_square_upper_tail(x: float, dof: int) -> float:
    """``P(chi2_dof > x)`` as the regularized upper incomplete gamma ``Q(dof/2, x/2)``."""
    if dof < 1:
        raise ValueError("dof must be >= 1")
    if x <= 0:
        return 1.0
    return float(special.gammaincc(0.5 * dof, 0.5 * x))


def undersmoothed_dims(m0: int, m1: int, T: float, exponent: float = 1.0 / 20.0):
    f = T ** exponent
    # the tiny offset keeps exact products from rounding up a whole unit
    return (int(math.ceil(m0 * f - 1e-12)), int(math.ceil(m1 * f - 1e-12)))


def _test_design(events: EventData, m0: int, m1: int, support_b: float,
                 config: TestConfig) -> DesignCache:
    a, b = undersmoothed_dims(m0, m1, events.horizon_T, config.undersmooth_exponent)
    method = "exact" if config.grid_resolution is None else "midpoint"
    return build_design(events, a, b, support_b, grid_resolution=config.grid_resolution,
                        degree0=config.degree0, degree1=config.degree1, method=method,
                        constant_background=True)


def _test_on_design(design: DesignCache, j: int, config: TestConfig) -> BackgroundTest:
    if design.event_counts[j] == 0:
        raise UndefinedKappaError(f"node {j} has no events")
    fit, _ = select_eta(design, j, config.n_grid, config.alpha_T, config.s0, tol=config.tol)
    support = fit.active_set
    full = refit(design, j, support)
    null = refit(design, j, support, background_coefs=[0])
    T = design.horizon_T
    S = T * (null.loss_value - full.loss_value)
    slack = config.clamp_rel * T * max(abs(full.loss_value), abs(null.loss_value))
    if S < 0:
        if S < -slack:
            raise InternalInconsistencyError(
                f"restricted loss below unrestricted loss for node {j} (S = {S:.3e})")
        S = 0.0
    # the first basis element is 1, so row 0 of G integrates the linear predictor
    lam = float(design.G[0] @ full.beta)
    dof = design.m0 - 1
    stat = S / lam
    pval = chi_square_upper_tail(stat, dof)
    return BackgroundTest(j, S, lam, dof, stat, pval, design.m0, design.m1, support,
                          pval < config.alpha_level)


def test_background(events: EventData, j: int, m0: int, m1: int, support_b: float,
                    config: Optional[TestConfig] = None) -> BackgroundTest:
    """Test ``H0: nu_j`` is constant, given estimation-stage dimensions ``m0, m1``."""
    config = config or TestConfig()
    design = _test_design(events, m0, m1, support_b, config)
    return _test_on_design(design, j, config)


def test_all_nodes(events: EventData, m0: int, m1: int, support_b: float,
                   config: Optional[TestConfig] = None,
                   nodes: Optional[Sequence[int]] = None) -> List[BackgroundTest]:
    """Run the test for every node with events on one shared design."""
    config = config or TestConfig()
    design = _test_design(events, m0, m1, support_b, config)
    if nodes is None:
        nodes = [j for j in range(events.p) if events.counts[j] > 0]
    return [_test_on_design(design, j, config) for j in nodes]


# pytest would otherwise try to collect these as test functions
test_background.__test__ = False
test_all_nodes.__test__ = False
