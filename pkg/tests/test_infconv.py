from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskconv.errors import InstanceTooLarge, PreconditionError, UnboundedBelow, UnsupportedOperation
from riskconv.infconv import (
    Allocation,
    BudgetSum,
    SolverOptions,
    certify_exactness,
    greedy_split,
    grid_resolution,
    infconv_bruteforce,
    infconv_law_invariant,
    infconv_surplus,
    sum_acceptance,
)
from riskconv.measures import AcceptanceSet, Budget, RiskMeasure, acceptance_value, from_acceptance
from riskconv.probspace import RandomVariable, rv, uniform_space

from conftest import X4

ES3, ES6 = RiskMeasure.es(0.3), RiskMeasure.es(0.6)


# -- allocations ---------------------------------------------------------------------

def test_proportional_allocation_is_valid():
    a = Allocation.proportional([-4, 0, 3], [1, 2])
    assert a.check() == []
    assert a.slopes() == [[Fraction(1, 3)] * 2, [Fraction(2, 3)] * 2]


def test_tampered_allocation_fails_monotone():
    a = Allocation((Fraction(-1), Fraction(0), Fraction(1)),
                   ((Fraction(1), Fraction(0), Fraction(-1)), (Fraction(-2), Fraction(0), Fraction(2))))
    bad = a.check()
    assert "monotone" in bad and "lipschitz" in bad


def test_allocation_sum_identity_violation():
    a = Allocation((Fraction(0), Fraction(1)), ((Fraction(0), Fraction(1, 2)), (Fraction(0), Fraction(1, 3))))
    assert a.check() == ["sum_identity"]


def test_from_increments_around_zero():
    # zero lies strictly inside a support gap: one slope on both sides of it
    a = Allocation.from_increments([-2, 3], [[1.0, 4.0]])
    assert a.check() == []
    assert a.slopes() == [[Fraction(1, 5)] * 2, [Fraction(4, 5)] * 2]
    # zero outside the support: the nearest gap's slope continues down to 0
    b = Allocation.from_increments([1, 2, 4], [[1.0, 0.0], [0.5, 1.5]])
    assert b.check() == []
    assert b.evaluate(0, 1) == 1 and b.evaluate(1, 1) == 0
    assert b.evaluate(0, 4) == Fraction(5, 2)


@given(st.lists(st.integers(-6, 6), min_size=2, max_size=6, unique=True),
       st.integers(1, 4), st.randoms())
def test_from_increments_always_valid(support, d, rnd):
    K = len(support) - 1
    delta = [[rnd.random() for _ in range(d)] for _ in range(K)]
    a = Allocation.from_increments(support, delta)
    assert a.check() == []
    X = rv(support, exact=True)
    total = sum(a.pieces(X), RandomVariable.constant(X.space, 0))
    assert total.values.tolist() == X.values.tolist()


# -- the law-invariant solver --------------------------------------------------------

def test_es_pair_equals_larger_level(x4):
    res = infconv_law_invariant([ES3, ES6], x4)
    assert res.value == pytest.approx(float(ES6(x4)), abs=1e-4)
    assert res.value == pytest.approx(7 / 3, abs=1e-9)
    assert certify_exactness(res, [ES3, ES6], x4).passed


def test_es_pair_oracle(x4):
    orc = infconv_bruteforce(ES3, ES6, x4)
    assert orc.resolution == pytest.approx(grid_resolution(x4))
    res = infconv_law_invariant([ES3, ES6], x4)
    assert abs(orc.value - res.value) <= orc.resolution + 1e-4
    assert orc.value >= res.value - 1e-9  # the grid never beats the true infimum


@pytest.mark.parametrize("g1, g2", [(1.0, 2.0), (0.5, 0.5), (3.0, 1.0)])
def test_entropic_pair_proportional(g1, g2):
    X = rv([-3.0, -1.0, 0.5, 2.0])
    ms = [RiskMeasure.entropic(g1), RiskMeasure.entropic(g2)]
    res = infconv_law_invariant(ms, X)
    assert res.value == pytest.approx(RiskMeasure.entropic(g1 + g2)(X), abs=1e-4)
    for i, row in enumerate(res.allocation.slopes()):
        target = (g1, g2)[i] / (g1 + g2)
        assert all(abs(float(s) - target) <= 1e-4 for s in row)
    cert = certify_exactness(res, ms, X)
    assert cert.passed, cert.violations


def test_proportional_entropic_witness_certifies():
    X = rv([-3.0, -1.0, 0.5, 2.0])
    ms = [RiskMeasure.entropic(1.0), RiskMeasure.entropic(2.0)]
    res = infconv_law_invariant(ms, X)
    res.allocation = Allocation.proportional(res.allocation.knots, [1, 2])
    res.value = RiskMeasure.entropic(3.0)(X)
    assert certify_exactness(res, ms, X, tol=1e-12).passed


def test_constant_position():
    X = rv([2.0] * 3)
    ms = [RiskMeasure.es(0.4), RiskMeasure.entropic(1.0)]
    res = infconv_law_invariant(ms, X)
    assert res.value == pytest.approx(-2.0)
    assert certify_exactness(res, ms, X).passed


def test_single_agent_is_identity(x4):
    res = infconv_law_invariant([ES3], x4)
    assert res.value == pytest.approx(ES3(x4))
    assert res.allocation.slopes() == [[1] * (len(res.allocation.knots) - 1)]
    assert certify_exactness(res, [ES3], x4).passed


def test_neg_expectation_pair(x4):
    m = RiskMeasure.neg_expectation()
    res = infconv_law_invariant([m, m], x4)
    assert res.value == pytest.approx(0.5, abs=1e-12)


def test_three_agents():
    X = rv([-5.0, -1.0, 0.0, 2.0, 4.0])
    ms = [RiskMeasure.entropic(1.0), RiskMeasure.entropic(2.0), RiskMeasure.entropic(1.0)]
    res = infconv_law_invariant(ms, X)
    assert res.value == pytest.approx(RiskMeasure.entropic(4.0)(X), abs=1e-4)
    assert certify_exactness(res, ms, X).passed


def test_upper_bound_by_trivial_split():
    rng = np.random.default_rng(9)
    for _ in range(10):
        X = rv(np.round(rng.standard_normal(5) * 3, 1))
        ms = [RiskMeasure.es(0.25), RiskMeasure.entropic(1.5)]
        res = infconv_law_invariant(ms, X, SolverOptions(iterations=300))
        zero = RandomVariable.constant(X.space, 0.0)
        assert res.value <= ms[0](X) + ms[1](zero) + 1e-9
        assert res.value <= ms[0](zero) + ms[1](X) + 1e-9


def test_solver_refuses_non_convex(x4):
    with pytest.raises(PreconditionError):
        infconv_law_invariant([RiskMeasure.var(0.3), ES3], x4)


def test_oracle_size_limits():
    with pytest.raises(InstanceTooLarge):
        infconv_bruteforce(ES3, ES6, rv(np.arange(7.0)))
    with pytest.raises(InstanceTooLarge):
        infconv_bruteforce(ES3, ES6, rv([1.0, 2.0]), grid=101)


@settings(max_examples=15)
@given(st.lists(st.integers(-5, 5), min_size=3, max_size=3),
       st.sampled_from([0.2, 0.5, 0.8]), st.sampled_from([0.3, 0.6, 1.0]))
def test_random_three_atom_es_pairs(vals, a, b):
    X = rv([float(v) for v in vals])
    ms = [RiskMeasure.es(a), RiskMeasure.es(b)]
    res = infconv_law_invariant(ms, X, SolverOptions(iterations=300))
    orc = infconv_bruteforce(ms[0], ms[1], X, grid=25)
    assert abs(orc.value - res.value) <= orc.resolution + 1e-4
    assert res.value == pytest.approx(RiskMeasure.es(max(a, b))(X), abs=1e-6)


def test_certificate_catches_wrong_value(x4):
    res = infconv_law_invariant([ES3, ES6], x4)
    res.value -= 0.1
    cert = certify_exactness(res, [ES3, ES6], x4)
    assert not cert.passed and cert.violations == ["value"]


# -- surplus-monotone budget sets ----------------------------------------------------

def test_surplus_equal_weights(x4, x4_exact):
    A1, A2 = AcceptanceSet.budget(1, 0.3), AcceptanceSet.budget(1, 0.2)
    res = infconv_surplus(A1, A2, x4)
    assert res.value == pytest.approx(2.0, abs=1e-12)
    merged = from_acceptance(AcceptanceSet.budget(1, 0.5))
    assert res.value == pytest.approx(merged(x4), abs=1e-12)
    assert res.converged and res.gap < 1e-9
    exact = infconv_surplus(AcceptanceSet.budget(1, Fraction(3, 10)),
                            AcceptanceSet.budget(1, Fraction(1, 5)), x4_exact)
    assert exact.value == 2


def test_surplus_witness_decomposition(x4_exact):
    A1 = AcceptanceSet.budget(1, Fraction(3, 10))
    A2 = AcceptanceSet.budget([1, 2, 1, 0], Fraction(1, 5))
    res = infconv_surplus(A1, A2, x4_exact)
    X1, X2 = res.pieces
    assert (X1 + X2).values.tolist() == list(X4)
    m = res.value
    assert A1.contains(X1 + m) and A2.contains(X2)


def test_surplus_positive_and_zero_capacity():
    A1, A2 = AcceptanceSet.budget(1, 0.3), AcceptanceSet.budget(1, 0.2)
    assert infconv_surplus(A1, A2, rv([1.0] * 4)).value == pytest.approx(-1.5)
    Z1, Z2 = AcceptanceSet.budget(1, 0), AcceptanceSet.budget(1, 0)
    X = rv(X4)
    assert infconv_surplus(Z1, Z2, X).value == pytest.approx(4.0)


def test_surplus_unbounded():
    A = AcceptanceSet.budget(0, 1)
    with pytest.raises(UnboundedBelow):
        infconv_surplus(A, A, rv(X4))


def test_surplus_needs_budgets(x4):
    with pytest.raises(UnsupportedOperation):
        infconv_surplus(AcceptanceSet.everything(), AcceptanceSet.budget(1, 1), x4)


def test_sum_acceptance_equal_weights_adds_capacity():
    rng = np.random.default_rng(0)
    S = sum_acceptance(AcceptanceSet.budget(1, Fraction(3, 10)), AcceptanceSet.budget(1, Fraction(1, 5)))
    M = AcceptanceSet.budget(1, Fraction(1, 2))
    for _ in range(200):
        X = rv(rng.integers(-3, 3, 8), exact=True) * Fraction(1, 4)
        assert S.contains(X) == M.contains(X)


def test_sum_with_zero_set_is_identity():
    rng = np.random.default_rng(1)
    A = AcceptanceSet.budget([1, 2, 0, 1], Fraction(1, 2))
    S = sum_acceptance(A, AcceptanceSet.budget(1, 0))
    for _ in range(200):
        X = rv(rng.integers(-4, 4, 4), exact=True) * Fraction(1, 3)
        assert S.contains(X) == A.contains(X)


def test_sum_membership_monotone_in_capacity():
    rng = np.random.default_rng(2)
    w1, w2 = [1, 3, 0.5, 2], [2, 1, 1, 0]
    for _ in range(100):
        X = rv(rng.normal(size=4))
        small = sum_acceptance(AcceptanceSet.budget(w1, 0.2), AcceptanceSet.budget(w2, 0.1))
        big = sum_acceptance(AcceptanceSet.budget(w1, 0.2), AcceptanceSet.budget(w2, 0.4))
        assert not small.contains(X) or big.contains(X)


def test_greedy_matches_dual_description():
    rng = np.random.default_rng(3)
    sp = uniform_space(5, exact=True)
    for _ in range(300):
        w1 = [Fraction(int(v)) for v in rng.integers(0, 4, 5)]
        w2 = [Fraction(int(v)) for v in rng.integers(0, 4, 5)]
        D = BudgetSum(Budget(w1, Fraction(int(rng.integers(0, 3)), 2)),
                      Budget(w2, Fraction(int(rng.integers(0, 3)), 2)))
        Z = RandomVariable(sp, [Fraction(int(v), 2) for v in rng.integers(0, 5, 5)])
        dual = all(b.contains(Z) for b in D.budgets_on(sp))
        assert D.contains(Z) == dual


def test_greedy_split_witness():
    sp = uniform_space(4, exact=True)
    Z = RandomVariable(sp, [4, 2, 0, 0])
    ok, Y, W = greedy_split(Z, Budget(1, Fraction(3, 10)), Budget(1, Fraction(1, 5)))
    assert not ok
    ok, Y, W = greedy_split(Z, Budget(1, 1), Budget(1, Fraction(1, 2)))
    assert ok
    assert (Y + W).values.tolist() == [4, 2, 0, 0]
    assert Budget(1, 1).contains(Y) and Budget(1, Fraction(1, 2)).contains(W)


@given(st.lists(st.integers(-8, 8), min_size=8, max_size=8))
def test_summed_set_value_matches_acceptance_value(vals):
    X = rv(vals, exact=True) * Fraction(1, 2)
    A1, A2 = AcceptanceSet.budget([1, 1, 2, 2, 0, 1, 3, 1], Fraction(1, 3)), AcceptanceSet.budget(1, Fraction(1, 4))
    res = infconv_surplus(A1, A2, X)
    assert res.value == acceptance_value(sum_acceptance(A1, A2), X)
    assert res.converged
