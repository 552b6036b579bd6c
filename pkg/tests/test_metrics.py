import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hawkesnet import oracles as O
from hawkesnet.metrics import (FittedModel, aggregate, evaluate, mse_background, mse_transfer,
                               selection_scores)
from hawkesnet.model import BackgroundFunction, ModelSpec, TransferFunction
from hawkesnet.spline_basis import make_basis


def step_fit(p, T, m0=4, m1=4, beta=None):
    beta = np.zeros((p, m0 + p * m1)) if beta is None else beta
    return FittedModel(p, T, make_basis(1, m0, [0.0, T]), make_basis(1, m1, [0.0, 0.01]), beta)


def const_model(p, T, c=2.0, transfers=None):
    return ModelSpec(p, T, (BackgroundFunction.constant(c),) * p, transfers or {})


def test_selection_examples():
    edges = {(0, 1), (0, 2), (1, 2)}
    r = selection_scores(edges, edges, 3)
    assert r.f1 == 1.0 and r.fpr == 0.0 and r.fnr == 0.0
    r = selection_scores({(0, 1), (0, 2), (1, 0)}, {(0, 1), (0, 2), (2, 0)}, 3)
    assert (r.tp, r.fp, r.fn, r.tn) == (2, 1, 1, 2)
    assert abs(r.f1 - 4 / 6) < 1e-15
    true10 = {(0, k) for k in range(1, 11)}
    r = selection_scores(true10, set(), 21)
    assert r.fnr == 1.0 and r.f1 == 0.0 and r.fpr == 0.0
    r = selection_scores(set(), set(), 4)
    assert r.f1 == 1.0 and "f1:empty" in r.notes and r.tn == 12


def test_self_pairs_extend_universe():
    r = selection_scores({(0, 0)}, {(0, 0), (1, 0)}, 2)
    assert r.tp + r.fp + r.fn + r.tn == 3


@settings(max_examples=40, deadline=None)
@given(p=st.integers(2, 8), seed=st.integers(0, 10_000))
def test_property_selection_permutation_invariant(p, seed):
    rng = np.random.default_rng(seed)
    pairs = [(j, k) for j in range(p) for k in range(p) if j != k]
    a, b = ({pairs[i] for i in np.nonzero(rng.random(len(pairs)) < 0.3)[0]} for _ in range(2))
    perm = rng.permutation(p)
    pa = {(int(perm[j]), int(perm[k])) for j, k in a}
    pb = {(int(perm[j]), int(perm[k])) for j, k in b}
    r, q = selection_scores(a, b, p), selection_scores(pa, pb, p)
    assert (r.tp, r.fp, r.fn, r.tn, r.f1) == (q.tp, q.fp, q.fn, q.tn, q.f1)


def test_mse_background_exact_and_offset():
    T = 3.0
    fit = step_fit(2, T)
    fit.beta[:, :4] = 2.0
    assert mse_background(const_model(2, T, 2.0), fit) < 1e-14
    assert abs(mse_background(const_model(2, T, 2.5), fit) - 0.5) < 1e-13


def test_mse_background_vs_trapezoid_oracle():
    T = 4.0
    rng = np.random.default_rng(0)
    fit = FittedModel(1, T, make_basis(4, 7, [0.0, T]), make_basis(1, 2, [0.0, 0.01]),
                      rng.normal(size=(1, 9)))
    bg = BackgroundFunction.sinusoid(3.0, 2.0, T, 1.5)
    truth = ModelSpec(1, T, (bg,))
    ref = O.trapezoid_mse(lambda t: fit.nu_hat(0, t), bg, (0.0, T))
    assert abs(mse_background(truth, fit) - ref) < 1e-6


def test_mse_transfer_cases(derived):
    T, p = 2.0, 3
    tf = TransferFunction.gamma(20000.0)
    truth = const_model(p, T, transfers={(0, 1): tf})
    fit = step_fit(p, T)
    # zero estimate reduces to the truth norm, averaged over targets
    expect = math.sqrt(derived["transfer_sq_norm_excitatory"]) / p
    assert abs(mse_transfer(truth, fit) - expect) < 1e-7
    # one spurious constant edge of height c on [0, b]
    c = 3.0
    s = 4 + 2 * 4
    fit.beta[1, s:s + 4] = c
    wrong = mse_transfer(const_model(p, T), fit)
    assert abs(wrong - math.sqrt(c * c * 0.01) / p) < 1e-12


def test_evaluate_and_aggregate():
    T, p = 2.0, 3
    fit = step_fit(p, T)
    fit.beta[:, :4] = 2.0
    rep = evaluate(const_model(p, T), fit)
    assert rep.mse_nu < 1e-14 and rep.mse_omega == 0.0 and rep.f1 == 1.0
    agg = aggregate([{"a": 1.0, "b": 2}, {"a": 3.0, "b": 2}])
    assert agg["a"]["mean"] == 2.0 and agg["a"]["se"] == 1.0 and agg["b"]["se"] == 0.0
    assert aggregate([]) == {}


def test_fitted_model_json_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    beta = rng.normal(size=(2, 5 + 2 * 4))
    beta[0, 5:9] = 0.0
    fit = FittedModel(2, 3.0, make_basis(4, 5, [0.0, 3.0]), make_basis(3, 4, [0.0, 0.01]), beta,
                      (0.1, 0.2), (True, False), {"note": "x"})
    fit.to_json(tmp_path / "f.json")
    g = FittedModel.from_json(tmp_path / "f.json")
    assert np.array_equal(g.beta, fit.beta) and g.edges == fit.edges
    assert g.edges == {(0, 1), (1, 0), (1, 1)}
    assert g.etas == fit.etas and g.converged == fit.converged and g.extra == fit.extra
    t = np.linspace(0, 3, 7)
    np.testing.assert_array_equal(g.nu_hat(1, t), fit.nu_hat(1, t))
    assert FittedModel.from_json(fit.to_json()).to_json() == fit.to_json()


@pytest.mark.parametrize("c", [0.0, 1.0])
def test_mse_nonnegative(c):
    fit = step_fit(1, 1.0)
    fit.beta[0, :4] = c
    assert mse_background(const_model(1, 1.0, 0.5), fit) >= 0.0
