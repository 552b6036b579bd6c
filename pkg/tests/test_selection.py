import math

import numpy as np
import pytest

from hawkesnet.design import build_design
from hawkesnet.errors import UndefinedKappaError
from hawkesnet.estimator import fit_node, refit
from hawkesnet.model import preset
from hawkesnet.selection import (GicRecord, bic_value, default_alpha_T, default_s0, eta_grid,
                                 eta_max, gic, select_basis_dims, select_eta)
from hawkesnet.simulator import EventData, simulate

from helpers import random_instance, synthetic_design


def test_gic_hand_instance():
    r = GicRecord(0.1, -3.0 * 0.5 + (2.0 / 10.0) * 4, -3.0, 0.5, 4, 2.0)
    assert abs(r.gic_value - (-0.7)) < 1e-15


def test_gic_record_identity():
    alpha, G = random_instance(0, 3, 3, 2)
    d = synthetic_design(alpha, G, 3, 2, counts=[4, 2, 1], T=10.0)
    f = fit_node(d, 0, 0.05)
    r = gic(d, f, 2.0)
    assert r.kappa == 2.5 and r.model_size == f.model_size
    assert r.gic_value == f.loss_value * 2.5 + (2.0 / 10.0) * f.model_size
    empty = fit_node(d, 0, eta_max(d, 0))
    assert gic(d, empty, 0.0).gic_value == empty.loss_value * 2.5


def test_undefined_kappa():
    alpha, G = random_instance(1, 2, 2, 2)
    d = synthetic_design(alpha, G, 2, 2, counts=[0, 3])
    with pytest.warns(RuntimeWarning):
        f = fit_node(d, 1, 0.1)
    with pytest.raises(UndefinedKappaError):
        gic(d, fit_node(d, 0, 0.1), 1.0)
    assert gic(d, f, 1.0).kappa == 1.0 / 3


def test_defaults():
    assert default_alpha_T(21, 10.0) == math.log(21) ** 2 * math.log(10.0) / 2
    assert default_s0(10.0, 21) == math.ceil(3 * math.sqrt(10) / math.log(math.log(10)))
    assert default_s0(10.0, 21, scale=1.0) == 4
    assert default_s0(1e6, 5) == 5
    assert default_s0(2.0, 7) == 7


def test_eta_grid_shape():
    g = eta_grid(2.0, 50)
    assert g.size == 50 and g[0] == 2.0 and abs(g[-1] - 2e-3) < 1e-15
    np.testing.assert_allclose(g[1:] / g[:-1], (1e-3) ** (1 / 49), rtol=1e-12)
    with pytest.raises(ValueError):
        eta_grid(1.0, 1)


def test_select_eta_paths():
    alpha, G = random_instance(2, 5, 3, 3)
    d = synthetic_design(alpha, G, 3, 3, counts=[5] * 5)
    fit, rec = select_eta(d, 0, n_grid=20, alpha_T=0.5, s0=3)
    assert rec[0].model_size == 0
    assert fit.model_size <= 3
    assert fit.eta in [r.eta for r in rec]
    best = min(r.gic_value for r in rec if r.model_size <= 3)
    assert gic(d, fit, 0.5).gic_value == best
    # the path stops at the first fit above s0
    assert all(r.model_size <= 3 for r in rec[:-1])
    again, rec2 = select_eta(d, 0, n_grid=20, alpha_T=0.5, s0=3)
    assert np.array_equal(again.beta, fit.beta) and rec2 == rec


def test_two_point_grid():
    alpha, G = random_instance(3, 3, 3, 2)
    d = synthetic_design(alpha, G, 3, 2, counts=[5] * 3)
    fit, rec = select_eta(d, 0, n_grid=2, alpha_T=0.1, s0=3)
    assert len(rec) == 2 and rec[0].model_size == 0
    assert fit.eta == min(rec, key=lambda r: (r.gic_value, -r.eta)).eta


def test_single_candidate_pair():
    ev = EventData(2, 1.0, [np.array([0.5]), np.array([])])
    sel = select_basis_dims(ev, [7], [5], 0.01)
    assert (sel.m0, sel.m1) == (7, 5) and sel.surface == {}


def test_basis_selection_surface(tiny_events):
    sel = select_basis_dims(tiny_events, [4, 5], [4, 5], 0.3, n_grid=10)
    assert set(sel.surface) == {(4, 4), (4, 5), (5, 4), (5, 5)}
    assert sel.surface[(sel.m0, sel.m1)] == min(sel.surface.values())
    d = build_design(tiny_events, 4, 5, 0.3)
    fits = [refit(d, j, e) for j, e in zip(range(3), sel.initial_edges)]
    assert bic_value(d, fits) == sel.surface[(4, 5)]


def test_null_node_selects_empty():
    # node 1 has no incoming edges in this structure
    m = preset("setting3_1", T=20.0, seed=0)
    assert not any(j == 1 for j, _ in m.edge_set)
    empty = sum(not select_eta(build_design(simulate(m, s), 4, 4, 0.01), 1)[0].active_set
                for s in range(50))
    assert empty >= 45


def test_hub_node_recovery():
    m = preset("setting1_2", T=10.0, seed=0)
    truth = {k for j, k in m.edge_set if j == 0}
    f1 = []
    for s in range(50):
        est = select_eta(build_design(simulate(m, s), 4, 4, 0.01), 0)[0].active_set
        tp = len(truth & est)
        f1.append(2 * tp / (len(truth) + len(est)))
    assert np.mean(f1) >= 0.8
