import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from compactmarkov import (
    BoundedFunction,
    ChainSpecError,
    DomainError,
    MassVector,
    TruncationPolicy,
    apply_operator,
    evolve_distribution,
    finite,
    funnel,
    lazy,
    make_chain,
    n_step,
    paper_bd,
)
from compactmarkov.chain import MassFlow, explore, is_irreducible

from oracles import dense, random_chain


def stochastic_matrices(max_states=8):
    def build(arr):
        arr = arr + 1e-3
        return arr / arr.sum(axis=1, keepdims=True)

    return st.integers(2, max_states).flatmap(
        lambda n: hnp.arrays(float, (n, n), elements=st.floats(0.0, 1.0)).map(build)
    )


# --- operator -------------------------------------------------------------


@pytest.mark.parametrize("c", [0.0, 1.0, -2.5, 7.0])
def test_operator_preserves_constants(c, fun, bd07):
    f = BoundedFunction({}, c)
    for k in (fun, bd07):
        for x in range(5):
            assert apply_operator(k, f, x) == pytest.approx(c, abs=1e-15)


def test_operator_on_swap(s2):
    assert apply_operator(s2, BoundedFunction({0: 1.0, 1: 0.0}), 1) == 1.0


def test_operator_reads_bd_row(bd07):
    assert apply_operator(bd07, BoundedFunction.indicator([0]), 1) == pytest.approx(0.7, abs=1e-15)


def test_operator_rejects_bad_state(s2, bd07):
    with pytest.raises(DomainError):
        apply_operator(s2, BoundedFunction.indicator([0]), 2)
    with pytest.raises(DomainError):
        apply_operator(bd07, BoundedFunction.indicator([0]), -1)
    with pytest.raises(DomainError):
        apply_operator(bd07, BoundedFunction.indicator([0]), 1.5)


def test_bounded_function_rejects_infinite():
    with pytest.raises(DomainError):
        BoundedFunction({0: math.inf})


# --- evolution ------------------------------------------------------------


def test_evolve_swap(s2):
    out = evolve_distribution(s2, MassVector.delta(0))
    assert out.entries == {1: 1.0}
    assert out.defect == 0.0


def test_evolve_bd_row(bd07):
    out = evolve_distribution(bd07, MassVector.delta(1))
    assert out[0] == pytest.approx(0.7, abs=1e-15)
    assert out[2] == pytest.approx(0.3, abs=1e-15)
    assert out.total() == pytest.approx(1.0, abs=1e-15)


def test_evolve_floor_moves_mass_to_defect(bd07):
    policy = TruncationPolicy(max_states=10_000, mass_floor=1e-3)
    nu = MassVector.delta(0)
    for _ in range(60):
        nu = evolve_distribution(bd07, nu, policy)
        assert all(m >= 1e-3 for m in nu.entries.values())
    assert nu.defect > 0.0
    assert nu.total() == pytest.approx(1.0, abs=1e-12)


def test_evolve_state_cap(bd07):
    policy = TruncationPolicy(max_states=3)
    nu = MassVector.delta(5)
    for _ in range(10):
        nu = evolve_distribution(bd07, nu, policy)
        assert len(nu.entries) <= 3
    assert nu.total() == pytest.approx(1.0, abs=1e-12)


def test_policy_validation():
    with pytest.raises(DomainError):
        TruncationPolicy(max_states=0)
    with pytest.raises(DomainError):
        TruncationPolicy(mass_floor=0.1)


# --- n-step ---------------------------------------------------------------


def test_n_step_examples(s2, l_half, bd07):
    assert n_step(s2, 0, 2).entries == {0: 1.0}
    l3 = n_step(l_half, 0, 3)
    assert l3[0] == pytest.approx(0.5, abs=1e-15) and l3[1] == pytest.approx(0.5, abs=1e-15)
    b2 = n_step(bd07, 0, 2)
    assert b2[0] == pytest.approx(0.7, abs=1e-15)
    assert b2[2] == pytest.approx(0.3, abs=1e-15)
    assert b2.defect == 0.0


def test_n_step_zero_is_delta(bd07):
    assert n_step(bd07, 4, 0).entries == {4: 1.0}
    with pytest.raises(DomainError):
        n_step(bd07, 0, -1)


def test_n_step_small_cap_keeps_total(bd07):
    out = n_step(bd07, 0, 30, TruncationPolicy(max_states=8))
    assert out.defect > 0.0
    assert out.total() == pytest.approx(1.0, abs=1e-12)


def test_n_step_infinite_matches_truncated_matrix(bd07):
    # within 40 steps from 0 the walk cannot see past state 40
    P = dense(bd07, 60)
    row = np.linalg.matrix_power(P, 40)[0]
    out = n_step(bd07, 0, 40)
    for y in range(60):
        assert out[y] == pytest.approx(row[y], abs=1e-13)


@settings(max_examples=60, deadline=None)
@given(stochastic_matrices(), st.integers(0, 12), st.data())
def test_n_step_matches_matrix_power(P, n, data):
    k = finite(P.tolist())
    x = data.draw(st.integers(0, P.shape[0] - 1))
    ref = np.linalg.matrix_power(dense(k), n)[x]
    out = n_step(k, x, n)
    assert out.defect == 0.0
    for y in range(P.shape[0]):
        assert out[y] == pytest.approx(ref[y], abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(stochastic_matrices(), st.integers(1, 15))
def test_mass_is_preserved(P, steps):
    k = finite(P.tolist())
    nu = MassVector({0: 0.5, P.shape[0] - 1: 0.5})
    for _ in range(steps):
        nu = evolve_distribution(k, nu)
        assert nu.total() == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.integers(1, 200), st.integers(5, 50))
def test_defect_is_monotone(p, cap, steps):
    flow = MassFlow(paper_bd(p), 0, steps, TruncationPolicy(max_states=cap))
    last = 0.0
    for _ in range(steps):
        flow.step()
        assert flow.defect >= last
        assert flow.alive() + flow.defect == pytest.approx(1.0, abs=1e-12)
        last = flow.defect


@settings(max_examples=40, deadline=None)
@given(stochastic_matrices(6), st.data())
def test_indicator_consistent_with_evolution(P, data):
    # (P 1_A)(x) equals the mass that delta_x P puts on A
    k = finite(P.tolist())
    n = P.shape[0]
    A = data.draw(st.sets(st.integers(0, n - 1), min_size=1))
    x = data.draw(st.integers(0, n - 1))
    lhs = apply_operator(k, BoundedFunction.indicator(A), x)
    rhs = evolve_distribution(k, MassVector.delta(x)).mass_on(A)
    assert lhs == pytest.approx(rhs, abs=1e-12)


# --- exploration ----------------------------------------------------------


def test_explore_is_prefix_stable(bd07):
    a = explore(bd07, 3, 5, 1000)
    b = explore(bd07, 3, 12, 1000)
    assert b.states[: a.size] == a.states
    assert not a.complete


def test_explore_returns_small_finite_chain_whole(fun):
    nb = explore(fun, 7, 1, 1000)
    assert nb.size == 51 and nb.complete


def test_irreducibility():
    assert is_irreducible(lazy(0.3))
    assert not is_irreducible(finite([[1.0, 0.0], [0.5, 0.5]]))
    with pytest.raises(DomainError):
        is_irreducible(paper_bd(0.3))


def test_random_chains_are_irreducible(rng):
    for n in range(2, 9):
        assert is_irreducible(random_chain(rng, n, 0.2))


# --- construction ---------------------------------------------------------


def test_make_chain_examples(s2, bd07, fun):
    assert make_chain({"type": "finite", "rows": [[0, 1], [1, 0]]}).row(0) == s2.row(0) == ((1, 1.0),)
    assert bd07.row(0) == ((1, 1.0),)
    assert dict(fun.row(3)) == {0: 0.8, 4: pytest.approx(0.2)}
    assert dict(fun.row(50)) == {0: 0.8, 50: pytest.approx(0.2)}


def test_lazy_rows():
    assert dict(lazy(0.25).row(0)) == {0: 0.25, 1: 0.75}


@pytest.mark.parametrize(
    "spec, field",
    [
        ({"type": "nope"}, "type"),
        ({"type": "paper_bd"}, "p"),
        ({"type": "paper_bd", "p": 1.5}, "p"),
        ({"type": "paper_bd", "p": 0.0}, "p"),
        ({"type": "lazy", "p": "x"}, "p"),
        ({"type": "finite", "rows": [[0.5, 0.4], [0, 1]]}, "rows[0]"),
        ({"type": "finite", "rows": [[1, 0]]}, "rows[0]"),
        ({"type": "finite", "rows": [[1, -0.0, 0], [0, 1, 0], [0, 0, -1]]}, "rows[2][2]"),
        ({"type": "funnel", "eps": 0.2, "M": 0}, "M"),
        ({"type": "birth_death", "up": [1, 0], "down": [0]}, "down"),
        ({"type": "birth_death", "up": [1, 0.5], "down": [0, 1]}, "up[1]"),
    ],
)
def test_make_chain_names_bad_field(spec, field):
    with pytest.raises(ChainSpecError) as info:
        make_chain(spec)
    assert info.value.field == field


def test_row_sums_within_tolerance_are_accepted():
    k = finite([[0.5, 0.5 + 5e-10], [1.0, 0.0]])
    assert math.fsum(w for _, w in k.row(0)) == pytest.approx(1.0, abs=1e-15)


def test_non_stochastic_oracle_rejected():
    from compactmarkov import Kernel

    k = Kernel(lambda x: ((0, 0.5),), 1)
    with pytest.raises(ChainSpecError):
        k.row(0)
