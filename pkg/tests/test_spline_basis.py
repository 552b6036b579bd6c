import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hawkesnet import oracles as O
from hawkesnet.errors import InvalidDimensionError, InvalidIntervalError
from hawkesnet.spline_basis import (constant_background_basis, eval_basis, gram_matrix,
                                    make_basis)


def test_step_basis_is_indicators():
    b = make_basis(1, 4, [0.0, 0.01])
    assert b.dim == 4 and b.n_interior == 3
    t = np.array([0.001, 0.003, 0.006, 0.0099])
    np.testing.assert_array_equal(b(t), np.eye(4))
    np.testing.assert_allclose(b.integrals(), [0.0025] * 4, rtol=1e-14)


def test_step_two_pieces():
    b = make_basis(1, 2, [0.0, 1.0])
    np.testing.assert_array_equal(eval_basis(b, 0.3), [1.0, 0.0])
    np.testing.assert_allclose(gram_matrix(b), np.diag([0.5, 0.5]), atol=1e-15)


def test_bernstein_case_sums_to_one():
    b = make_basis(4, 4, [0.0, 1.0])
    t = np.random.default_rng(0).uniform(0, 1, 100)
    np.testing.assert_allclose(b(t).sum(axis=1), 1.0, atol=1e-14)


def test_invalid_arguments():
    with pytest.raises(InvalidDimensionError):
        make_basis(4, 3, [0, 1])
    with pytest.raises(InvalidIntervalError):
        make_basis(2, 4, [1, 1])
    with pytest.raises(InvalidIntervalError):
        make_basis(2, 4, [2, 1])


def test_outside_interval_is_zero():
    b = make_basis(4, 7, [0.0, 0.01])
    assert not np.any(eval_basis(b, 0.01 + 1e-12))
    assert not np.any(eval_basis(b, -1e-12))
    assert np.any(eval_basis(b, 0.01))


@pytest.mark.parametrize("order,m", [(1, 5), (2, 6), (3, 6), (4, 8), (4, 24)])
def test_partition_of_unity(order, m):
    b = make_basis(order, m, [0.0, 3.0])
    t = np.random.default_rng(1).uniform(0.0, 3.0, 10_000)
    np.testing.assert_allclose(b(t).sum(axis=1), 1.0, atol=1e-10)


@pytest.mark.parametrize("order,m", [(1, 4), (3, 6), (4, 9)])
def test_matches_recursive_definition(order, m):
    b = make_basis(order, m, [0.0, 2.0])
    t = np.concatenate([np.random.default_rng(2).uniform(0, 2, 200), b.breakpoints])
    np.testing.assert_allclose(b(t), O.reference_basis_matrix(b, t), atol=1e-13)


@pytest.mark.parametrize("order,m", [(1, 5), (3, 7), (4, 10)])
def test_local_support(order, m):
    b = make_basis(order, m, [0.0, 1.0])
    t = np.linspace(0, 1, 5001)
    B = b(t)
    assert (np.count_nonzero(B, axis=1) <= order).all()
    width = order * b.span_width
    for i in range(m):
        nz = t[B[:, i] != 0]
        assert nz.max() - nz.min() <= width + 1e-12


def test_integrals_match_trapezoid_oracle(derived):
    b = make_basis(4, 8, [0.0, 1.0])
    np.testing.assert_allclose(b.integrals(), derived["cubic8_integrals"], atol=1e-8)


def test_gram_matches_trapezoid_oracle(derived):
    b = make_basis(4, 8, [0.0, 1.0])
    np.testing.assert_allclose(gram_matrix(b), derived["cubic8_gram"], atol=1e-7)


def test_gram_eigenvalues_scale_like_one_over_m(derived):
    ratios = []
    for m in (4, 8, 16, 32):
        ev = np.linalg.eigvalsh(gram_matrix(make_basis(4, m, [0.0, 1.0])))
        lo, hi = derived["cubic_gram_scaled_eigs"][str(m)]
        np.testing.assert_allclose([ev[0] * m, ev[-1] * m], [lo, hi], rtol=1e-6)
        ratios.append(ev[-1] / ev[0])
    # condition number stays bounded as m grows
    assert max(ratios) < 50


def test_weighted_gram():
    b = make_basis(3, 6, [0.0, 1.0])
    assert not np.any(gram_matrix(b, weight=lambda t: np.zeros_like(t)))
    g = gram_matrix(b, weight=lambda t: 1.0 + t)
    ref = O.dense_gram(b, 200_001, weight=lambda t: 1.0 + t)
    np.testing.assert_allclose(g, ref, atol=1e-9)
    assert np.linalg.eigvalsh(g)[0] > 0


def test_constant_first_basis():
    b = constant_background_basis(6, [0.0, 5.0])
    t = np.random.default_rng(3).uniform(0, 5, 100)
    assert np.all(b(t)[:, 0] == 1.0)
    # same span as the standard basis
    std = make_basis(4, 6, [0.0, 5.0])
    x = np.linspace(0, 5, 400)
    f = std(x) @ np.random.default_rng(4).normal(size=6)
    coef, *_ = np.linalg.lstsq(b(x), f, rcond=None)
    assert np.max(np.abs(b(x) @ coef - f)) < 1e-10
    with pytest.raises(InvalidDimensionError):
        constant_background_basis(1, [0, 1])


def test_constant_first_step_m2():
    b = constant_background_basis(2, [0.0, 1.0], degree_l=1)
    np.testing.assert_array_equal(b(np.array([0.2, 0.7])), [[1.0, 0.0], [1.0, 1.0]])


@settings(max_examples=60, deadline=None)
@given(order=st.integers(1, 5), extra=st.integers(0, 12),
       a=st.floats(-5, 5), width=st.floats(1e-3, 50), u=st.floats(0, 1))
def test_property_unity_and_nonnegativity(order, extra, a, width, u):
    b = make_basis(order, order + extra, [a, a + width])
    v = eval_basis(b, a + u * width)
    assert np.all(v >= 0)
    assert abs(v.sum() - 1.0) < 1e-10
    assert np.count_nonzero(v) <= order


@settings(max_examples=30, deadline=None)
@given(order=st.integers(1, 5), extra=st.integers(0, 8))
def test_property_integrals_sum_to_length(order, extra):
    b = make_basis(order, order + extra, [0.0, 2.5])
    assert abs(b.integrals().sum() - 2.5) < 1e-12
    np.testing.assert_allclose(gram_matrix(b).sum(), 2.5, rtol=1e-12)
