import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ptamper import bounds
from ptamper.covering import make_iid_covering, make_party_covering
from ptamper.oracle import (
    exact_attacked_expectation,
    exact_covering_average,
    exact_law,
    moments,
    rejsam_second_moment_bound_gap,
    statistical_distance,
    verify_covering_identity,
    verify_likelihood_ratio,
)
from ptamper.process import ExplicitProcess, fhat_table, make_objective

from conftest import instances


def test_exact_law_examples(uniform2):
    assert exact_law(uniform2).as_dict() == {(0, 0): 0.25, (0, 1): 0.25, (1, 0): 0.25, (1, 1): 0.25}
    law = exact_law(ExplicitProcess.bernoulli_iid(2, 0.7)).as_dict()
    assert law == pytest.approx({(1, 1): 0.49, (1, 0): 0.21, (0, 1): 0.21, (0, 0): 0.09})
    det = ExplicitProcess.product([{"a": 1.0}, {"b": 1.0}])
    assert exact_law(det).atoms == ((("a", "b"), 1.0),)


def test_moments_examples(uniform2, AND):
    m = moments(uniform2, AND, 0.5)
    assert (m.mu, m.nu, m.moment_1p) == pytest.approx((0.25, 0.1875, 0.25))
    c = moments(uniform2, make_objective("const:0.3"), 0.7)
    assert c.mu == pytest.approx(0.3) and c.nu == pytest.approx(0.0, abs=1e-15)
    assert c.moment_1p == pytest.approx(0.3**1.7)
    tri = ExplicitProcess.product([{0.0: 1 / 3, 0.5: 1 / 3, 1.0: 1 / 3}])
    ident = make_objective("table", {(0.0,): 0.0, (0.5,): 0.5, (1.0,): 1.0})
    m = moments(tri, ident, 1.0)
    assert (m.mu, m.nu, m.moment_1p) == pytest.approx((0.5, 1 / 6, 5 / 12))


def test_attacked_expectation_examples(uniform2, AND):
    assert exact_attacked_expectation(uniform2, AND, ()) == 0.25
    assert exact_attacked_expectation(uniform2, AND, {0, 1}) == pytest.approx(1.0)
    assert exact_attacked_expectation(uniform2, AND, {1}) == pytest.approx(0.5)
    notes = []
    exact_attacked_expectation(uniform2, AND, {1}, notes=notes)
    assert notes


def test_covering_average_examples(uniform2, AND):
    assert exact_covering_average(uniform2, AND, make_iid_covering(2, 0.0)) == 0.25
    assert exact_covering_average(uniform2, AND, make_iid_covering(2, 1.0)) == pytest.approx(1.0)
    e0 = exact_attacked_expectation(uniform2, AND, {0})
    want = 0.25 * 0.25 + 0.25 * e0 + 0.25 * 0.5 + 0.25 * 1.0
    assert exact_covering_average(uniform2, AND, make_iid_covering(2, 0.5)) == pytest.approx(want)


def test_likelihood_ratio_examples(uniform2, AND):
    assert verify_likelihood_ratio(uniform2, AND) <= 1e-9
    assert verify_likelihood_ratio(uniform2, make_objective("const:1")) == 0.0
    assert verify_likelihood_ratio(ExplicitProcess.bernoulli_iid(3, 0.7), make_objective("parity")) <= 1e-9


def test_covering_identity_examples(uniform2, AND):
    one = make_objective("const:1")
    res = verify_covering_identity(uniform2, one, make_iid_covering(2, 0.5), (0, 1))
    assert res.residual == 0.0 and res.status == "pass"
    res = verify_covering_identity(uniform2, AND, make_iid_covering(2, 0.5), (1, 1))
    assert res.status == "pass" and res.residual <= 1e-8
    proc = ExplicitProcess.bernoulli_iid(2, 0.6)
    res = verify_covering_identity(proc, make_objective("or"), make_party_covering([0, 1], 1, 1.0), (1, 0))
    assert res.status == "pass" and res.residual <= 1e-8
    res = verify_covering_identity(uniform2, AND, make_iid_covering(2, 0.5), (0, 1))
    assert res.status == "degenerate"
    assert res.to_json()["status"] == "degenerate"


def test_statistical_distance():
    d = {0: 0.5, 1: 0.5}
    assert statistical_distance(d, d) == 0.0
    assert statistical_distance({0: 1.0}, {1: 1.0}) == 1.0
    assert statistical_distance(d, {0: 0.2, 1: 0.8}) == pytest.approx(0.3)


@given(instances())
def test_law_is_normalized(inst):
    proc, _ = inst
    law = exact_law(proc)
    assert abs(law.total - 1.0) <= 1e-10
    assert len({s for s, _ in law.atoms}) == len(law.atoms)


@given(instances(), st.floats(0, 1))
def test_moment_ranges(inst, p):
    proc, f = inst
    m = moments(proc, f, p)
    assert 0.0 <= m.mu <= 1.0 and 0.0 <= m.moment_1p <= 1.0
    assert m.nu <= m.mu * (1 - m.mu) + 1e-12


@given(instances())
def test_empty_plan_is_exact_mu(inst):
    proc, f = inst
    assert exact_attacked_expectation(proc, f, ()) == fhat_table(proc, f)[()]


@given(instances(min_mu=0.01), st.floats(0, 1), st.booleans())
def test_unbounded_attack_bound(inst, p, party):
    proc, f = inst
    cov = make_party_covering(list(range(proc.n)), 1, p, proc.n) if party else make_iid_covering(proc.n, p)
    q = cov.target_p
    m = moments(proc, f, q)
    avg = exact_covering_average(proc, f, cov)
    assert avg >= bounds.tampering_bound(m.mu, m.moment_1p, q) - 1e-9
    assert rejsam_second_moment_bound_gap(proc, f, cov) >= -1e-9


@given(instances(min_mu=0.01), st.floats(0, 1))
def test_likelihood_ratio_and_identity(inst, p):
    proc, f = inst
    assert verify_likelihood_ratio(proc, f) <= 1e-9
    cov = make_iid_covering(proc.n, p)
    for y, _ in proc.support():
        res = verify_covering_identity(proc, f, cov, y)
        assert res.status in ("pass", "degenerate")
        if res.status == "pass":
            assert math.isfinite(res.residual)
