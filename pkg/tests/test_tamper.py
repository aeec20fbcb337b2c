import json
import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ptamper.covering import TamperPlan
from ptamper.errors import OutOfRange, ZeroMu, ZeroPartialExpectation
from ptamper.oracle import exact_attacked_expectation, tampered_conditional, tampered_law, truncated_acceptance_law
from ptamper.process import ExplicitProcess, fhat_table, make_objective
from ptamper.tamper import (
    TamperStrategy,
    rejsam_exact_conditional,
    rejsam_k_sample,
    required_iterations,
    run_tampered_execution,
)

from conftest import instances


def test_exact_conditional_and(uniform2, AND):
    d = rejsam_exact_conditional(uniform2, AND, ())
    assert d[0] == 0.0 and d[1] == pytest.approx(1.0)


def test_exact_conditional_constant_is_honest():
    proc = ExplicitProcess.bernoulli_iid(3, 0.3)
    d = rejsam_exact_conditional(proc, make_objective("const:0.4"), (1,))
    assert d == pytest.approx(proc.conditional_next((1,)))


def test_exact_conditional_parity(uniform2):
    assert rejsam_exact_conditional(uniform2, make_objective("parity"), ()) == pytest.approx({0: 0.5, 1: 0.5})


def test_exact_conditional_zero_branch(uniform2, AND):
    with pytest.raises(ZeroPartialExpectation):
        rejsam_exact_conditional(uniform2, AND, (0,))


def test_k_sample_constant_one(uniform2):
    sym, it, fb = rejsam_k_sample(uniform2, make_objective("const:1"), (), 1, random.Random(0))
    assert it == 1 and not fb


def test_k_sample_constant_zero_falls_back(uniform2):
    rng = random.Random(0)
    for _ in range(20):
        _, it, fb = rejsam_k_sample(uniform2, make_objective("const:0"), (), 5, rng)
        assert fb and it == 5


def test_k_sample_matches_truncated_law(uniform2, AND):
    k, trials = 64, 100_000
    law = tampered_conditional(uniform2, AND, TamperStrategy.iterated(k), ())
    rng = random.Random(7)
    ones = sum(rejsam_k_sample(uniform2, AND, (), k, rng)[0] for _ in range(trials))
    sd = math.sqrt(law[1] * (1 - law[1]) / trials)
    assert abs(ones / trials - law[1]) <= 3 * sd + 1e-12


def test_k_sample_small_budget_law(uniform2, AND):
    k, trials = 2, 100_000
    law = tampered_conditional(uniform2, AND, TamperStrategy.iterated(k), ())
    rng = random.Random(8)
    ones = sum(rejsam_k_sample(uniform2, AND, (), k, rng)[0] for _ in range(trials))
    assert abs(ones / trials - law[1]) <= 3 * math.sqrt(law[1] * (1 - law[1]) / trials)


def test_required_iterations():
    assert required_iterations(4, 0.1, 0.25) == 112180
    assert required_iterations(1, 1.0, 1.0) == 12
    assert required_iterations(10, 0.5, 0.5) == 945
    with pytest.raises(ZeroMu):
        required_iterations(3, 0.1, 0.0)
    with pytest.raises(OutOfRange):
        required_iterations(3, 0.0, 0.5)


def test_empty_plan_is_honest(uniform2, AND):
    exe = run_tampered_execution(uniform2, AND, TamperStrategy.ideal(), TamperPlan(frozenset()), random.Random(0))
    assert all(not b.tampered for b in exe.provenance)


def test_ideal_full_plan_forces_ones(uniform2, AND):
    rng = random.Random(0)
    for _ in range(50):
        exe = run_tampered_execution(uniform2, AND, TamperStrategy.ideal(), TamperPlan(frozenset({0, 1})), rng)
        assert exe.sequence == (1, 1)
        assert all(b.tampered and not b.fell_back for b in exe.provenance)


def test_iterated_k1_mean_matches_dp(uniform2, AND):
    strat = TamperStrategy.iterated(1)
    plan = TamperPlan(frozenset({0, 1}))
    exact = exact_attacked_expectation(uniform2, AND, plan.tamper_set, strat)
    rng = random.Random(3)
    trials = 100_000
    mean = sum(run_tampered_execution(uniform2, AND, strat, plan, rng).objective_value for _ in range(trials)) / trials
    assert abs(mean - exact) <= 3 * math.sqrt(exact * (1 - exact) / trials)


def test_execution_json(uniform2, AND):
    exe = run_tampered_execution(uniform2, AND, TamperStrategy.iterated(3), TamperPlan(frozenset({1})), random.Random(1))
    data = json.loads(exe.to_json())
    assert data["sequence"] == list(exe.sequence)
    assert len(data["provenance"]) == 2


def test_plan_out_of_range(uniform2, AND):
    with pytest.raises(OutOfRange):
        run_tampered_execution(uniform2, AND, TamperStrategy.ideal(), TamperPlan(frozenset({2})), random.Random(0))


@given(instances(), st.integers(0, 2**32 - 1), st.sampled_from(["ideal", 1, 3]))
def test_plausibility_and_provenance(inst, seed, kind):
    proc, f = inst
    rng = random.Random(seed)
    strat = TamperStrategy.ideal() if kind == "ideal" else TamperStrategy.iterated(kind)
    plan = TamperPlan(frozenset(i for i in range(proc.n) if rng.random() < 0.5))
    exe = run_tampered_execution(proc, f, strat, plan, rng)
    assert proc.prefix_probability(exe.sequence) > 0
    assert [b.tampered for b in exe.provenance] == [i in plan.tamper_set for i in range(proc.n)]
    if kind == "ideal":
        assert not any(b.fell_back for b in exe.provenance)


@given(instances(min_mu=0.01))
def test_ideal_full_tampering_law(inst):
    proc, f = inst
    mu = fhat_table(proc, f)[()]
    law = tampered_law(proc, f, range(proc.n)).as_dict()
    for seq, q in proc.support():
        assert abs(law.get(seq, 0.0) - f(seq) * q / mu) <= 1e-9


@given(instances(max_n=4, min_mu=0.01))
def test_monotone_truncation(inst):
    proc, f = inst
    full = range(proc.n)
    ideal = exact_attacked_expectation(proc, f, full)
    prev = exact_attacked_expectation(proc, f, ())
    for k in (1, 2, 4, 8, 16, 32, 64):
        cur = exact_attacked_expectation(proc, f, full, TamperStrategy.iterated(k))
        assert cur >= prev - 1e-9
        assert cur <= ideal + 1e-9
        prev = cur
    assert exact_attacked_expectation(proc, f, full, TamperStrategy.iterated(10**6)) == pytest.approx(ideal, abs=1e-6)


@given(instances(), st.integers(1, 40))
def test_closed_form_matches_recursion(inst, k):
    proc, f = inst
    table = fhat_table(proc, f)
    for pfx, honest in proc.tree.items():
        if table[pfx] <= 0.0:
            continue
        scores = {s: table[pfx + (s,)] for s in honest}
        rec = truncated_acceptance_law(honest, scores, k)
        closed = tampered_conditional(proc, f, TamperStrategy.iterated(k), pfx)
        for s in honest:
            assert abs(rec[s] - closed[s]) <= 1e-12
