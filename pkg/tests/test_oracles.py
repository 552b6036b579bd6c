import re
from pathlib import Path

import numpy as np

from hawkesnet import oracles as O
from hawkesnet.simulator import EventData
from hawkesnet.spline_basis import make_basis

from helpers import random_instance

SRC = Path(__file__).resolve().parents[1] / "src" / "hawkesnet"


def test_production_code_never_imports_oracles():
    pat = re.compile(r"^\s*(from\s+\S*oracles\s+import|import\s+\S*oracles|from\s+\.\s+import"
                     r"\s+.*\boracles\b)", re.M)
    for path in SRC.glob("*.py"):
        if path.name != "oracles.py":
            assert not pat.search(path.read_text()), path.name


def test_quadrature_examples():
    assert abs(O.dense_quadrature(lambda x: x, (0.0, 1.0), 1001) - 0.5) < 1e-15
    assert abs(O.dense_quadrature(lambda x: 3.0 + 0 * x, (1.0, 3.5), 11) - 7.5) < 1e-14


def test_naive_loss_zero_beta_and_single_event():
    b0 = make_basis(1, 2, [0.0, 1.0])
    b1 = make_basis(1, 4, [0.0, 0.01])
    ev = EventData(1, 1.0, [np.array([0.3])])
    assert O.naive_loss(ev, b0, b1, np.zeros((1, 6))) == 0.0
    # nu = c on [0, 1] and omega = w on its first step: (c^2 + 2 c w h + w^2 h) - 2 c
    c, w, h = 2.0, 5.0, 0.0025
    beta = np.array([[c, c, w, 0, 0, 0]])
    expect = c * c + 2 * c * w * h + w * w * h - 2 * c
    assert abs(O.naive_loss(ev, b0, b1, beta) - expect) < 1e-12


def test_subgradient_huge_eta_zeroes_groups():
    alpha, G = random_instance(0, 2, 2, 2)
    beta = O.subgradient_solver(alpha, G, 1e6, 2, 2, iters=20_000)
    assert not beta[2:].any()
    np.testing.assert_allclose(beta[:2], np.linalg.solve(G[:2, :2], alpha[:2]), atol=1e-8)


def test_subgradient_unpenalized_is_dense_solve():
    alpha, G = random_instance(1, 2, 2, 2)
    beta = O.subgradient_solver(alpha, G, 0.0, 2, 2, iters=50_000)
    np.testing.assert_allclose(beta, O.dense_solve(G, alpha), atol=1e-6)


def test_enumeration_and_subgradient_agree():
    alpha, G = random_instance(2, 3, 2, 2)
    eta = 0.6
    a = O.penalized_objective(alpha, G, eta, 2, 2, O.enumeration_solver(alpha, G, eta, 2, 2))
    b = O.penalized_objective(alpha, G, eta, 2, 2, O.subgradient_solver(alpha, G, eta, 2, 2))
    assert abs(a - b) < 1e-8
