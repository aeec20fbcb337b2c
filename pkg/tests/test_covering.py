import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ptamper.covering import (
    condition_on_parties,
    covering_from_json,
    make_explicit_covering,
    make_iid_covering,
    make_party_covering,
    verify_covering,
)
from ptamper.errors import IndexOutOfRange, OutOfRange

fs = frozenset


def support(cov):
    return {s: w for s, w in cov.enumerate_support()}


def test_iid_extremes():
    assert support(make_iid_covering(5, 0.0)) == {fs(): 1.0}
    assert support(make_iid_covering(5, 1.0)) == {fs(range(5)): 1.0}


def test_iid_subset_weight():
    assert support(make_iid_covering(3, 0.5))[fs({0, 2})] == pytest.approx(0.125)


def test_iid_rejects_bad_p():
    with pytest.raises(OutOfRange):
        make_iid_covering(3, 1.5)


def test_party_full_corruption():
    cov = make_party_covering([0, 1, 2], 3, 1.0)
    rng = random.Random(0)
    assert all(cov.sample(rng).tamper_set == fs({0, 1, 2}) for _ in range(20))


def test_party_marginal_one_sixth():
    cov = make_party_covering([0, 1, 2], 1, 0.5)
    for i in range(3):
        assert cov.marginal(i) == pytest.approx(1 / 6)
        assert math.fsum(w for s, w in cov.enumerate_support() if i in s) == pytest.approx(1 / 6)


def test_party_blocks():
    cov = make_party_covering([0, 0, 1, 1], 1, 1.0)
    assert support(cov) == {fs({0, 1}): 0.5, fs({2, 3}): 0.5}


def test_party_k1_never_both():
    cov = make_party_covering([0, 1], 1, 1.0)
    rng = random.Random(4)
    seen = {cov.sample(rng).tamper_set for _ in range(200)}
    assert seen == {fs({0}), fs({1})}
    assert cov.enumerate_support() == [(fs({0}), 0.5), (fs({1}), 0.5)]


def test_iid_sampling_frequencies():
    cov = make_iid_covering(2, 0.5)
    rng = random.Random(9)
    trials = 100_000
    counts = {}
    for _ in range(trials):
        s = cov.sample(rng).tamper_set
        counts[s] = counts.get(s, 0) + 1
    sd = math.sqrt(0.25 * 0.75 / trials)
    assert len(counts) == 4
    assert all(abs(c / trials - 0.25) <= 3 * sd for c in counts.values())


def test_marginals():
    assert make_iid_covering(4, 0.3).marginal(2) == 0.3
    assert make_party_covering([0, 1, 2, 3], 2, 0.6).marginal(1) == pytest.approx(0.3)
    ex = make_explicit_covering(2, [([], 0.5), ([0], 0.5)])
    assert ex.marginal(0) == 0.5
    with pytest.raises(IndexOutOfRange):
        ex.marginal(2)


def test_enumerate_examples():
    assert make_iid_covering(1, 0.25).enumerate_support() == [(fs(), 0.75), (fs({0}), 0.25)]
    assert make_iid_covering(2, 1.0).enumerate_support() == [(fs({0, 1}), 1.0)]


def test_explicit_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        make_explicit_covering(2, [([0], 0.4)])


def test_explicit_merges_duplicates():
    cov = make_explicit_covering(2, [([1, 0], 0.25), ([0, 1], 0.25), ([], 0.5)])
    assert cov.enumerate_support() == [(fs(), 0.5), (fs({0, 1}), 0.5)]


def test_verify_covering_examples():
    rep = verify_covering(make_iid_covering(3, 1.0), 100, random.Random(0))
    assert rep.passed and all(r["empirical"] == 1.0 for r in rep.rows)
    rep = verify_covering(make_party_covering([0, 1, 2], 1, 0.5), 100_000, random.Random(1))
    assert rep.passed
    assert all(abs(r["empirical"] - 1 / 6) < 0.01 for r in rep.rows)
    rep = verify_covering(make_explicit_covering(2, [([], 1.0)]), 10, random.Random(2))
    assert rep.passed and all(r["empirical"] == 0.0 for r in rep.rows)


def test_condition_on_parties():
    cov = condition_on_parties(make_party_covering([0, 1, 1], 1, 0.5), [1])
    assert cov.marginal(0) == 0.0 and cov.marginal(1) == 0.5
    assert support(cov) == pytest.approx({fs(): 0.25, fs({1}): 0.25, fs({2}): 0.25, fs({1, 2}): 0.25})


def test_json_roundtrip():
    for cov in (make_iid_covering(3, 0.2), make_party_covering([0, 1, 1], 1, 0.5),
                make_explicit_covering(2, [([0], 0.5), ([1], 0.5)])):
        again = covering_from_json(cov.to_json())
        assert again.enumerate_support() == cov.enumerate_support()


owner_maps = st.lists(st.integers(0, 3), min_size=1, max_size=5)


@given(owner_maps, st.integers(1, 4), st.floats(0, 1))
def test_party_marginal_is_constant(owner, k, p):
    m = max(owner) + 1
    k = min(k, m)
    cov = make_party_covering(owner, k, p, m)
    for i in range(len(owner)):
        assert cov.marginal(i) == p * k / m
        emp = math.fsum(w for s, w in cov.enumerate_support() if i in s)
        assert abs(emp - cov.marginal(i)) <= 1e-12


@given(st.integers(1, 6), st.floats(0, 1))
def test_iid_marginals_match_support(n, p):
    cov = make_iid_covering(n, p)
    sup = cov.enumerate_support()
    assert abs(math.fsum(w for _, w in sup) - 1.0) <= 1e-12
    for i in range(n):
        assert abs(math.fsum(w for s, w in sup if i in s) - p) <= 1e-12


@given(owner_maps, st.floats(0, 1), st.data())
def test_fixed_coalition_round_untampered_mass(owner, p, data):
    m = max(owner) + 1
    c = data.draw(st.integers(0, m - 1))
    cov = condition_on_parties(make_party_covering(owner, 1, p, m), [c])
    for j in cov.rounds_of([c]):
        miss = math.fsum(w for s, w in cov.enumerate_support() if j not in s)
        assert abs(miss - (1.0 - p)) <= 1e-12
