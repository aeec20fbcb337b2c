import math

import pytest

from ptamper.errors import OutOfRange
from ptamper.mpplearn import (
    CONFIDENCE,
    CSV_COLUMNS,
    RISK,
    TARGETED,
    AdversaryObjective,
    assemble_adversary,
    best_fixed_corruption,
    honest_confidence,
    honest_error,
    make_hypothesis,
    preset,
    protocol_as_process,
    protocol_from_json,
    risk_variance,
    run_attack,
)
from ptamper.oracle import exact_law
from ptamper.tamper import required_iterations


@pytest.fixture(scope="module")
def majority():
    return preset("majority")


def with_owner_map(spec, owner_map):
    data = spec.to_json()
    data["owner_map"] = list(owner_map)
    return protocol_from_json(data)


def test_process_is_product(majority):
    proc = protocol_as_process(majority)
    law = exact_law(proc).as_dict()
    assert len(law) == 8
    assert law[((1, 1), (1, 1), (1, 1))] == pytest.approx(0.343)


def test_single_party_two_rounds():
    spec = protocol_from_json({
        "m": 1, "owner_map": [0, 0], "party_distributions": [[[[0, 0], 0.5], [[1, 1], 0.5]]],
        "test_distribution": [[[1, 1], 1.0]], "hypotheses": ["constant:0", "constant:1"],
        "aggregator": "majority_label",
    })
    assert len(exact_law(protocol_as_process(spec)).atoms) == 4


def test_honest_metrics(majority):
    assert honest_confidence(majority) == pytest.approx(0.784)
    assert honest_error(majority) == pytest.approx(0.216)
    assert honest_error(majority, (1, 1)) == pytest.approx(0.216)
    data = majority.to_json()
    data["alpha"] = 1.0
    assert honest_confidence(protocol_from_json(data)) == 1.0


def test_constant_aggregator_metrics(majority):
    data = majority.to_json()
    data["aggregator"] = "constant"
    data["hypotheses"] = ["constant:1"]
    spec = protocol_from_json(data)
    assert honest_error(spec) == 0.0
    data["hypotheses"] = ["constant:0"]
    assert honest_confidence(protocol_from_json(data)) == 0.0


def test_hypotheses():
    assert make_hypothesis("threshold:5")(7) == 1
    assert make_hypothesis("threshold:5")(4) == 0
    assert make_hypothesis("constant:1")("anything") == 1


def test_budget_from_formula(majority):
    adv = assemble_adversary(majority, AdversaryObjective(TARGETED, (1, 1)), 1, 1.0, 0.05)
    assert adv.k_budget == required_iterations(3, 0.05, 0.216)


def test_full_corruption_is_full_tampering(majority):
    adv = assemble_adversary(majority, AdversaryObjective(CONFIDENCE), 3, 1.0, 0.1)
    assert all(s == frozenset(range(3)) for s, _ in adv.covering.enumerate_support())
    rep = run_attack(majority, adv, "exact")
    assert rep.attacked == pytest.approx(0.0, abs=1e-12)
    assert rep.meets_bound


def test_zero_p_is_honest(majority):
    for kind in (CONFIDENCE, RISK, TARGETED):
        obj = AdversaryObjective(kind, (1, 1) if kind == TARGETED else None)
        adv = assemble_adversary(majority, obj, 2, 0.0, 0.1)
        rep = run_attack(majority, adv, "exact")
        assert rep.attacked == rep.honest
        mc = run_attack(majority, adv, "montecarlo", trials=200, seed=1)
        assert mc.attacked_objective == pytest.approx(rep.honest_objective, abs=0.2)


def test_targeted_example(majority):
    _, rep = best_fixed_corruption(majority, AdversaryObjective(TARGETED, (1, 1)), 1, 1.0)
    assert rep.attacked >= 0.216 + 0.784 / 3 - 1e-9
    assert rep.meets_bound


def test_ties_go_to_first_coalition(majority):
    c, rep = best_fixed_corruption(majority, AdversaryObjective(RISK), 1, 0.0)
    assert c == frozenset({0})
    assert len(set(rep.per_party.values())) == 1


def test_later_rounds_are_stronger(majority):
    # an online tamperer at the last round sees the whole transcript so far
    _, rep = best_fixed_corruption(majority, AdversaryObjective(RISK), 1, 0.5)
    vals = [rep.per_party[str(i)] for i in range(3)]
    assert vals == sorted(vals) and vals[0] < vals[2]


def test_heavier_party_wins(majority):
    spec = with_owner_map(majority, (0, 1, 1))
    c, rep = best_fixed_corruption(spec, AdversaryObjective(TARGETED, (1, 1)), 1, 1.0)
    assert c == frozenset({1})
    assert rep.per_party["1"] > rep.per_party["0"]


def test_full_coalition_report_equals_run_attack(majority):
    obj = AdversaryObjective(RISK)
    c, rep = best_fixed_corruption(majority, obj, 3, 0.5)
    assert c == frozenset(range(3))
    direct = run_attack(majority, assemble_adversary(majority, obj, 3, 0.5, 1.0, parties=[0, 1, 2]))
    assert rep.attacked == direct.attacked


def test_best_at_least_average(majority):
    for kind in (CONFIDENCE, RISK, TARGETED):
        obj = AdversaryObjective(kind, (1, 1) if kind == TARGETED else None)
        _, best = best_fixed_corruption(majority, obj, 1, 0.5)
        avg = run_attack(majority, assemble_adversary(majority, obj, 1, 0.5, 1.0), "exact")
        assert best.attacked_objective >= avg.attacked_objective - 1e-9
        assert best.covering_average == pytest.approx(avg.attacked_objective, abs=1e-12)


def test_majority_bounds_exact(majority):
    nu = risk_variance(majority)
    assert nu == pytest.approx(0.216 * 0.784)
    for k in (1, 2, 3):
        for p in (0.5, 1.0):
            for kind in (CONFIDENCE, RISK, TARGETED):
                obj = AdversaryObjective(kind, (1, 1) if kind == TARGETED else None)
                _, rep = best_fixed_corruption(majority, obj, k, p)
                assert rep.meets_bound, (kind, k, p, rep.attacked, rep.bound)


@pytest.mark.parametrize("eps", [0.1, 0.05])
def test_majority_montecarlo_bound(majority, eps):
    _, rep = best_fixed_corruption(majority, AdversaryObjective(TARGETED, (1, 1)), 1, 1.0, eps,
                                   mode="montecarlo", trials=2000, seed=3)
    assert rep.attacked >= rep.bound - 4 * rep.se
    assert rep.max_iterations <= rep.k_budget
    assert rep.max_message_distance <= 1.0 + 1e-12


def test_report_serialization(majority):
    _, rep = best_fixed_corruption(majority, AdversaryObjective(CONFIDENCE), 1, 1.0)
    row = rep.csv_row()
    assert len(row) == len(CSV_COLUMNS)
    assert rep.to_json()["direction"] == "upper"
    assert rep.se == 0.0 and rep.exact


def test_invalid_k(majority):
    with pytest.raises(OutOfRange):
        best_fixed_corruption(majority, AdversaryObjective(RISK), 4, 0.5)


def test_presets_normalized():
    for name in ("majority", "threshold-ERM", "noisy-label-majority"):
        spec = preset(name)
        for d in (*spec.party_distributions, spec.test_distribution):
            assert math.fsum(d.values()) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        preset("nope")


def test_noisy_majority_attack_plausible():
    spec = preset("noisy-label-majority")
    adv = assemble_adversary(spec, AdversaryObjective(TARGETED, (1, 1)), 1, 1.0, 0.1)
    rep = run_attack(spec, adv, "montecarlo", trials=300, seed=5)
    assert rep.max_message_distance <= 1.0 + 1e-12
