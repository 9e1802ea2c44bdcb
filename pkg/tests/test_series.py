import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from compactmarkov import TruncatedSeries, abelian_limit
from compactmarkov.errors import DomainError, EvaluationError, SeriesDivisionError
from compactmarkov.series import (
    series_add,
    series_div,
    series_eval,
    series_mul,
    series_scale,
    series_sub,
    write_csv,
)

S = TruncatedSeries


def coeffs(order=20, lo=-2.0, hi=2.0):
    return hnp.arrays(float, order + 1, elements=st.floats(lo, hi))


def alternating(order):
    a = np.zeros(order + 1)
    a[::2] = 1.0
    return S(a)


def test_add_sub_scale():
    assert series_add(S([1, 0, 1]), S([0, 1, 0])).coeffs.tolist() == [1, 1, 1]
    a = S([3.0, -1.0, 2.5])
    assert not series_sub(a, a).coeffs.any()
    assert series_scale(S([1, 2]), 0.5).coeffs.tolist() == [0.5, 1.0]


def test_operators_match_functions():
    a, b = S([1.0, 2.0, 3.0]), S([1.0, -1.0, 0.5])
    assert np.array_equal((a + b).coeffs, series_add(a, b).coeffs)
    assert np.array_equal((a - b).coeffs, series_sub(a, b).coeffs)
    assert np.array_equal((a * b).coeffs, series_mul(a, b).coeffs)
    assert np.array_equal((2 * a).coeffs, (a * 2).coeffs)
    assert np.array_equal((a / b).coeffs, series_div(a, b).coeffs)
    assert a(0.5) == series_eval(a, 0.5)


def test_mixed_orders_truncate_to_common():
    assert series_add(S([1, 1, 1, 1]), S([1, 1])).order == 1


def test_mul_examples():
    ones = S(np.ones(30))
    assert series_mul(ones, ones).coeffs.tolist() == list(range(1, 31))
    z2 = S.monomial(2, 29)
    expected = np.zeros(30)
    expected[2::2] = 1.0
    assert np.array_equal(series_mul(z2, alternating(29)).coeffs, expected)
    a = S([0.3, -1.0, 2.0])
    assert np.array_equal(series_mul(a, S([1.0, 0.0, 0.0])).coeffs, a.coeffs)


def test_div_examples():
    assert series_div(S([1.0] + [0.0] * 20), S([1.0, -1.0] + [0.0] * 19)).coeffs.tolist() == [1.0] * 21
    g = alternating(40)
    q = series_div(g, g)
    assert q[0] == 1.0 and not q.coeffs[1:].any()
    a, b = S([0, 0, 1, 0, 0, 0, 0, 0]), S([1, 0, 1, 0, 1, 0, 1, 0])
    q = series_div(a, b)
    assert q.coeffs[:5].tolist() == [0, 0, 1, 0, -1]
    assert np.allclose(series_mul(q, b).coeffs, a.coeffs, atol=1e-14)


def test_div_by_zero_constant():
    with pytest.raises(SeriesDivisionError):
        series_div(S([1, 2]), S([0.0, 1.0]))
    with pytest.raises(ZeroDivisionError):
        series_div(S([1, 2]), S([1e-13, 1.0]))


def test_eval_examples():
    assert series_eval(alternating(200), 0.5) == pytest.approx(1 / 0.75, abs=1e-9)
    assert series_eval(S([4.2, 9.0, -3.0]), 0.0) == 4.2
    assert series_eval(S([0, 0, 1]), 0.9) == pytest.approx(0.81, abs=1e-15)


def test_eval_domain():
    with pytest.raises(DomainError):
        series_eval(S([1.0]), 1.5)
    with pytest.raises(DomainError):
        series_eval(S([1.0]), -0.1)


def test_constructor_rejects_bad_input():
    with pytest.raises(DomainError):
        S([])
    with pytest.raises(DomainError):
        S([1.0, math.nan])


def test_truncate_and_monomial():
    assert S([1, 2, 3]).truncate(1).coeffs.tolist() == [1, 2]
    assert S.monomial(5, 3).coeffs.tolist() == [0, 0, 0, 0]
    assert S.zeros(3).order == 3


@settings(max_examples=80, deadline=None)
@given(coeffs(), coeffs())
def test_mul_commutes(a, b):
    assert np.allclose(series_mul(S(a), S(b)).coeffs, series_mul(S(b), S(a)).coeffs, rtol=0, atol=1e-12)


@settings(max_examples=80, deadline=None)
@given(coeffs(12), coeffs(12), coeffs(12))
def test_mul_associates(a, b, c):
    l = series_mul(series_mul(S(a), S(b)), S(c)).coeffs
    r = series_mul(S(a), series_mul(S(b), S(c))).coeffs
    assert np.allclose(l, r, rtol=0, atol=1e-10 * (1 + np.abs(l).max()))


@settings(max_examples=80, deadline=None)
@given(coeffs(30, 0.0, 1.0), coeffs(30, -0.5, 0.5), st.floats(0.5, 2.0))
def test_div_roundtrip(a, tail, b0):
    # divisor with a dominant constant term keeps the quotient well conditioned
    b = tail.copy()
    b[0] = b0 + np.abs(tail[1:]).sum()
    q = series_div(S(a), S(b))
    assert np.allclose(series_mul(q, S(b)).coeffs, a, rtol=0, atol=1e-10)


@settings(max_examples=80, deadline=None)
@given(coeffs(40, 0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_eval_monotone_for_nonnegative(a, z1, z2):
    assume(z1 <= z2)
    assert series_eval(S(a), z1) <= series_eval(S(a), z2) + 1e-12


def test_abelian_examples():
    half = abelian_limit(lambda z: 1 / (1 + z))
    assert half.converged and half.value == pytest.approx(0.5, rel=1e-5)
    two = abelian_limit(lambda z: 1 + z)
    assert two.converged and two.value == pytest.approx(2.0, rel=1e-5)
    three = abelian_limit(lambda z: 3.0)
    assert three.converged and three.value == 3.0 and not three.infinite
    assert len(three.samples) == 18
    assert three.samples[0][0] == 1 - 2**-3 and three.samples[-1][0] == 1 - 2**-20


def test_abelian_divergent():
    est = abelian_limit(lambda z: 1 / (1 - z) ** 2)
    assert est.infinite and not est.converged and est.value == math.inf
    assert est.to_dict()["value"] is None
    slow = abelian_limit(lambda z: -math.log(1 - z))
    assert not slow.converged and not slow.infinite


def test_abelian_non_finite():
    with pytest.raises(EvaluationError):
        abelian_limit(lambda z: math.nan)
    with pytest.raises(ArithmeticError):
        abelian_limit(lambda z: math.inf)


def test_write_csv(tmp_path):
    path = tmp_path / "s.csv"
    write_csv(path, {"a": S([1, 2, 3]), "b": S([0.5, 0.25])})
    lines = path.read_text().splitlines()
    assert lines == ["index,a,b", "0,1.0,0.5", "1,2.0,0.25"]
