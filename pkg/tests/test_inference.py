import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hawkesnet import oracles as O
from hawkesnet.design import build_design
from hawkesnet.errors import UndefinedKappaError
from hawkesnet.inference import (TestConfig, _test_on_design, chi_square_upper_tail,
                                 test_all_nodes, test_background, undersmoothed_dims)
from hawkesnet.model import preset
from hawkesnet.simulator import EventData, simulate


def test_chi_square_examples(derived):
    assert chi_square_upper_tail(0.0, 3) == 1.0
    assert abs(chi_square_upper_tail(2 * math.log(2), 2) - 0.5) < 1e-14
    assert abs(chi_square_upper_tail(11.0705, 5) - 0.05) < 1e-4
    assert abs(chi_square_upper_tail(11.0705, 5) - derived["chi2_dof5_11.0705"]) < 1e-9
    with pytest.raises(ValueError):
        chi_square_upper_tail(1.0, 0)


@settings(max_examples=30, deadline=None)
@given(x=st.floats(0.01, 60), dof=st.integers(1, 30))
def test_property_chi_square_vs_integration(x, dof):
    assert abs(chi_square_upper_tail(x, dof) - O.chi_square_tail_by_integration(x, dof)) < 1e-8


def test_undersmoothed_dims():
    assert undersmoothed_dims(4, 4, 20.0) == (5, 5)
    assert undersmoothed_dims(4, 4, 1.0) == (4, 4)
    assert undersmoothed_dims(6, 5, 10.0) == (math.ceil(6 * 10 ** 0.05), math.ceil(5 * 10 ** 0.05))
    # exact powers do not round up an extra unit
    assert undersmoothed_dims(3, 2, 2.0 ** 20) == (6, 4)


@pytest.fixture(scope="module")
def s31_events():
    return simulate(preset("setting3_1", T=10.0, seed=0), 4)


def test_statistic_fields(s31_events):
    ev = s31_events
    res = test_all_nodes(ev, 4, 4, 0.01)
    assert [r.node_j for r in res] == [j for j in range(ev.p) if ev.counts[j] > 0]
    for r in res:
        assert r.S_j >= 0 and 0 <= r.p_value <= 1
        assert (r.m0_test, r.m1_test) == undersmoothed_dims(4, 4, 10.0)
        assert r.dof == r.m0_test - 1
        assert abs(r.statistic - r.S_j / r.lambda_bar) < 1e-12 * max(1.0, r.statistic)
        # with a constant basis element the plug-in mean rate is N_j / T
        assert abs(r.lambda_bar - ev.counts[r.node_j] / ev.horizon_T) < 1e-8 * r.lambda_bar
        assert r.reject == (r.p_value < 0.05)
    one = test_background(ev, res[3].node_j, 4, 4, 0.01)
    assert one == res[3]


def test_permutation_invariance(s31_events):
    ev = s31_events
    perm = np.random.default_rng(0).permutation(ev.p)
    a = test_all_nodes(ev, 4, 4, 0.01)
    b = {r.node_j: r for r in test_all_nodes(ev.permuted(perm), 4, 4, 0.01)}
    for r in a:
        s = b[int(perm[r.node_j])]
        assert abs(s.statistic - r.statistic) < 1e-6 * max(1.0, r.statistic)
        assert s.support == frozenset(int(perm[k]) for k in r.support)


def test_constant_synthetic_background_gives_zero():
    ev = simulate(preset("setting3_1", T=5.0, seed=0), 0)
    d = build_design(ev, 5, 5, 0.01, constant_background=True)
    alpha = np.tile(3.0 * d.G[0], (ev.p, 1))
    d = dataclasses.replace(d, alpha=alpha)
    r = _test_on_design(d, 2, TestConfig())
    assert r.S_j == 0.0 and r.p_value == 1.0


def test_empty_node_rejected():
    ev = EventData(2, 4.0, [np.array([0.5, 1.0, 2.0]), np.array([])])
    with pytest.raises(UndefinedKappaError):
        test_background(ev, 1, 4, 4, 0.01)


def test_midpoint_route_close_to_exact(s31_events):
    ev = s31_events
    a = test_background(ev, 2, 4, 4, 0.01)
    b = test_background(ev, 2, 4, 4, 0.01, TestConfig(grid_resolution=2e-5))
    assert b.support == a.support
    assert abs(b.p_value - a.p_value) < 0.01
