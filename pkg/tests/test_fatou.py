import math
from fractions import Fraction

import numpy as np
import pytest

from riskconv.errors import InvalidArgument
from riskconv.fatou import (
    SequenceFamily,
    gallery_bigexamp1,
    gallery_bigexamp2,
    ladder_space,
    liminf_surrogate,
    probe,
    pstar_consequence_probe,
)
from riskconv.measures import RiskMeasure
from riskconv.norms import LpNorm, exp_orlicz


def test_ladder_space_weights():
    sp = ladder_space(10, base_atoms=8)
    assert sp.n == 10 + 1 + 7
    p = sp.probs
    np.testing.assert_allclose(p[1:10] / p[:9], 0.25)
    assert p[:11].sum() == pytest.approx(1 / 8)


@pytest.mark.parametrize("kind", ["order_dominated", "norm_bounded_as", "as_only"])
def test_samples_converge_pointwise(kind):
    fam = SequenceFamily(kind, seed=3)
    for t in range(5):
        s = fam.sample(t, horizon=40)
        assert s.checks["pointwise_ok"]
        assert s.checks["unconverged_mass"] < 1e-20
        if kind == "order_dominated":
            assert s.checks["dominated"]
        if kind == "norm_bounded_as":
            assert s.checks["norm_bounded"]


def test_samples_are_seeded():
    a = SequenceFamily("as_only", seed=5).sample(2, 16)
    b = SequenceFamily("as_only", seed=5).sample(2, 16)
    c = SequenceFamily("as_only", seed=6).sample(2, 16)
    np.testing.assert_array_equal(a.terms, b.terms)
    assert not np.array_equal(a.terms, c.terms)


def test_family_validation():
    with pytest.raises(InvalidArgument):
        SequenceFamily("weak")
    with pytest.raises(InvalidArgument):
        SequenceFamily("as_only", sign="?")
    with pytest.raises(InvalidArgument):
        probe(RiskMeasure.es(0.5), SequenceFamily("as_only"), trials=1, horizon=1)


def test_liminf_surrogate():
    assert liminf_surrogate([5, 0, 3, 2, 4, 1]) == 1
    assert liminf_surrogate([7]) == 7


@pytest.mark.parametrize("kind", ["order_dominated", "norm_bounded_as", "as_only"])
@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
def test_es_never_violates(kind, alpha):
    rep = probe(RiskMeasure.es(alpha), SequenceFamily(kind, seed=1), trials=100, horizon=48)
    assert rep.violations == 0
    assert rep.constraint_failures == 0


def test_neg_expectation_dominated_is_fine():
    rep = probe(RiskMeasure.neg_expectation(), SequenceFamily("order_dominated", seed=2),
                trials=200, horizon=64)
    assert rep.violations == 0


def test_neg_expectation_fails_on_l1_bounded_sequences():
    rep = probe(RiskMeasure.neg_expectation(), SequenceFamily("norm_bounded_as", LpNorm(1)),
                trials=50, horizon=64)
    assert rep.violations == 50
    assert rep.max_violation >= 0.9
    # downward spikes only raise the risk: no violation in that direction
    rep = probe(RiskMeasure.neg_expectation(), SequenceFamily("norm_bounded_as", LpNorm(1), sign="-"),
                trials=20, horizon=64)
    assert rep.violations == 0


def test_neg_expectation_fine_on_l2_bounded_sequences():
    rep = probe(RiskMeasure.neg_expectation(), SequenceFamily("norm_bounded_as", LpNorm(2)),
                trials=50, horizon=64)
    assert rep.violations == 0


def test_unbounded_spikes():
    # upward spikes 8^n on cells of mass ~4^-n drag E[-X_n] to -inf ...
    rep = probe(RiskMeasure.neg_expectation(), SequenceFamily("as_only", sign="+"), trials=20, horizon=32)
    assert rep.violations == 20
    # ... but leave the entropic measure (and every ES) untouched in the limit
    rep = probe(RiskMeasure.entropic(1.0), SequenceFamily("as_only", sign="+"), trials=20, horizon=32)
    assert rep.violations == 0


# -- gallery -------------------------------------------------------------------------

def test_gallery_second_example_exact():
    g = gallery_bigexamp2(8)
    assert g["atoms"] == 840 and g["representable"]
    assert g["expectations"] == ["-1"] * 8
    assert g["norms_equal_one"]
    assert g["liminf_expectation"] == -1 and g["limit_expectation"] == 0
    assert g["gap"] == 1
    assert g["set_probabilities"] == [str(Fraction(1, n)) for n in range(1, 9)]


def test_gallery_second_example_n1():
    g = gallery_bigexamp2(1)
    assert g["atoms"] == 1 and g["expectations"] == ["-1"] and g["gap"] == 1


def test_gallery_second_example_dyadic_fallback():
    g = gallery_bigexamp2(30)
    assert not g["representable"] and g["atoms"] == 1024
    assert abs(float(g["gap"]) - 1) <= 1 / 1024
    assert all(Fraction(v) <= 1 for v in g["l1_norms"])
    with pytest.raises(InvalidArgument):
        gallery_bigexamp2(0)


def test_gallery_first_example():
    g = gallery_bigexamp1()
    assert g["bound_holds"]
    # the raw profile has sup exactly 2^(k/4); normalised, the growth per two ladder
    # steps increases towards sqrt(2)
    for row in g["rows"]:
        assert row["raw_sup"] == pytest.approx(2 ** (row["k"] / 4), rel=1e-12)
    growth = g["z_sup_growth"]
    assert all(b > a for a, b in zip(growth, growth[1:]))
    assert all(r < math.sqrt(2) for r in growth) and growth[-1] > math.sqrt(2) - 0.01
    for row in g["rows"]:
        assert row["pairings_decrease"]
        assert row["dominated_pairings"][-1] < row["dominated_pairings"][0]


def test_pstar_probe_l2():
    out = pstar_consequence_probe(LpNorm(2), trials=500, horizon=200)
    assert out["verdict"] == "holds"
    assert out["max_tail_abs_mean"] < 1e-3


def test_pstar_probe_exp():
    assert pstar_consequence_probe(exp_orlicz(), trials=50, horizon=100)["max_tail_abs_mean"] < 1e-3


def test_pstar_probe_l1_counterexample():
    out = pstar_consequence_probe(LpNorm(1), trials=10, horizon=50)
    assert out["verdict"] == "fails"
    assert out["counterexample"]["gap"] == pytest.approx(1.0)
    assert all(v == pytest.approx(1.0) for v in out["spike_means"])
