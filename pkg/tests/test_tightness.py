import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from compactmarkov import (
    BoundedFunction,
    DomainError,
    PreconditionError,
    TightnessCertificate,
    Verdict,
    apply_operator,
    classify,
    compactness_verdict,
    find_tight_set,
    finite,
    funnel,
    lazy,
    n_step_tail_check,
    paper_bd,
    tail_sup,
)
from compactmarkov.tightness import DEFAULT_EPSILON_GRID

from oracles import dense, random_stochastic


def test_tail_sup_examples(s2, fun):
    assert tail_sup(s2, {0, 1}) == (0.0, True)
    v = tail_sup(fun, {0})
    assert v.exhaustive and v.value == pytest.approx(0.2, abs=1e-15)
    for p in (0.2, 0.5, 0.7):
        for A in ([0], [0, 1, 2], range(100)):
            assert tail_sup(paper_bd(p), A) == (1.0, True)


def test_tail_sup_rejects_empty(s2):
    with pytest.raises(DomainError):
        tail_sup(s2, [])


def test_find_tight_set_examples(s2, fun, bd07):
    r = find_tight_set(fun, 0.3)
    assert r.found and r.certificate.A == (0,)
    assert r.certificate.achieved_tail == pytest.approx(0.2)
    assert tail_sup(fun, r.certificate.A).value == pytest.approx(0.2)
    assert tail_sup(s2, {0}).value == 1.0
    r = find_tight_set(s2, 0.5)
    assert r.found and set(r.certificate.A) == {0, 1} and r.best_tail == 0.0
    for budget in (10, 500, 2000):
        r = find_tight_set(bd07, 0.5, budget)
        assert not r.found and r.refuted
    assert r.to_dict()["certificate"] is None


def test_funnel_below_its_tail_falls_back_to_whole_space(fun):
    r = find_tight_set(fun, 0.2)
    assert r.found and set(r.certificate.A) == set(range(51))
    assert r.certificate.A[0] == 0


def test_greedy_prefers_incoming_mass_on_ties():
    # all candidates lower the sup equally; state 2 receives the most mass
    k = finite([[0.2, 0.2, 0.6], [0.2, 0.2, 0.6], [0.3, 0.3, 0.4]])
    r = find_tight_set(k, 0.7)
    assert r.certificate.A == (2,)


def test_certificate_validation():
    with pytest.raises(DomainError):
        TightnessCertificate((0,), 1.0, 0.2, True, 1)
    with pytest.raises(DomainError):
        TightnessCertificate((0,), 0.5, 1.5, True, 1)


def test_n_step_examples(s2, fun):
    checks = n_step_tail_check(fun, {0}, 0.25, 5)
    assert [c.n for c in checks] == [1, 2, 3, 4, 5]
    assert all(c.passed and c.value == pytest.approx(0.2, abs=1e-14) for c in checks)
    assert all(c.value == 0.0 for c in n_step_tail_check(s2, {0, 1}, 0.3, 10))


def test_n_step_refuses_uncertified(s2, bd07, fun):
    with pytest.raises(PreconditionError):
        n_step_tail_check(s2, {0}, 0.5, 3)
    with pytest.raises(PreconditionError):
        n_step_tail_check(bd07, {0, 1}, 0.9, 3)
    with pytest.raises(PreconditionError):
        n_step_tail_check(fun, {0}, 0.2, 3)


def test_compactness_examples(fun):
    for rows in ([[0, 1], [1, 0]], [[0.3, 0.7], [0.6, 0.4]]):
        rep = compactness_verdict(finite(rows))
        assert rep.verdict.startswith("criterion satisfied down to eps=0.01")
    rep = compactness_verdict(fun)
    assert all(s.found for s in rep.searches)
    assert [s.certificate.A for s in rep.searches if s.epsilon > 0.2] == [(0,)]
    for p in (0.25, 0.5, 0.7):
        rep = compactness_verdict(paper_bd(p))
        assert rep.verdict.startswith("refuted")
        assert all(s.refuted for s in rep.searches)
        assert [g["status"] for g in rep.to_dict()["grid"]] == ["refuted"] * len(DEFAULT_EPSILON_GRID)


def test_generic_infinite_chain_is_inconclusive():
    # no structural bound is registered for a hand-written oracle
    from compactmarkov import Kernel

    k = Kernel(lambda x: ((0, 0.9), (x + 1, 0.1)), None, "geometric reset")
    r = find_tight_set(k, 0.5, budget=50)
    assert not r.found and not r.refuted and not r.exhaustive
    assert compactness_verdict(k, (0.5,), 50).verdict == "inconclusive within budget"


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1), st.data())
def test_tail_sup_monotone_in_A(n, seed, data):
    k = finite(random_stochastic(np.random.default_rng(seed), n, 0.5).tolist())
    B = data.draw(st.sets(st.integers(0, n - 1), min_size=1))
    A = data.draw(st.sets(st.sampled_from(sorted(B)), min_size=1))
    assert tail_sup(k, A).value >= tail_sup(k, B).value - 1e-15


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1), st.data())
def test_tail_sup_matches_operator(n, seed, data):
    k = finite(random_stochastic(np.random.default_rng(seed), n, 0.5).tolist())
    A = data.draw(st.sets(st.integers(0, n - 1), min_size=1))
    ref = max(1 - apply_operator(k, BoundedFunction.indicator(A), x) for x in range(n))
    assert tail_sup(k, A).value == pytest.approx(ref, abs=1e-12)


def fleet_chains():
    seeds = st.integers(0, 2**32 - 1)
    rand = st.tuples(st.integers(2, 8), seeds, st.sampled_from([0.2, 0.5, 1.0])).map(
        lambda t: finite(random_stochastic(np.random.default_rng(t[1]), t[0], t[2]).tolist())
    )
    fun = st.tuples(st.floats(0.01, 0.9), st.integers(1, 60)).map(lambda t: funnel(*t))
    laz = st.floats(0.01, 0.99).map(lazy)
    return st.one_of(rand, fun, laz)


@settings(max_examples=60, deadline=None)
@given(fleet_chains(), st.sampled_from(DEFAULT_EPSILON_GRID + (0.9, 0.3)))
def test_certified_sets_satisfy_n_step_bound_and_recurrence(k, eps):
    r = find_tight_set(k, eps)
    assert r.found
    checks = n_step_tail_check(k, r.certificate.A, eps, 50)
    assert all(c.passed for c in checks)
    # the n-step tail, computed independently from matrix powers
    P = dense(k)
    u = np.zeros(P.shape[0])
    u[list(r.certificate.A)] = 1.0
    for c in checks[:10]:
        u = P @ u
        assert c.value == pytest.approx(float((1 - u).max()), abs=1e-12)
    rep = classify(k, r.certificate.A[0])
    assert rep.verdict is Verdict.POSITIVE_RECURRENT
