"""Multi-party learning protocols under (k, p)-poisoning.

A protocol has ``m`` parties; in round ``j`` party ``owner_map[j]`` broadcasts
one labeled example from its distribution. A deterministic aggregator maps
the transcript to one of finitely many hypotheses. Rounds are independent,
so the transcript is the product process ``d_{w(0)} x ... x d_{w(n-1)}``.

The adversary corrupts ``k`` parties. Every round of a corrupted party is
tampered independently with probability ``p`` by rejection sampling on an
objective derived from the attack goal (confidence, total risk, or loss on
one target example).
"""

from __future__ import annotations

import functools
import itertools
import math
import random
import time
from collections.abc import Callable, Mapping, Sequence
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

from . import bounds
from .covering import CoveringDistribution, condition_on_parties, make_party_covering
from .errors import OutOfRange, PlausibilityViolation, TooManySubsets, ZeroMu
from .oracle import exact_covering_average, moments, statistical_distance, tampered_conditional
from .process import ExplicitProcess, ObjectiveFunction, Prefix, _freeze, fhat_table
from .seeding import derive_seed
from .tamper import TamperStrategy, required_iterations, run_tampered_execution

NORMALIZATION_TOL = 1e-12
EXACT_TOL = 1e-9
DISTANCE_TOL = 1e-12

CONFIDENCE = "confidence"
RISK = "risk"
TARGETED = "targeted"

Example = tuple  # (instance, label)


@dataclass(frozen=True, eq=False)
class Hypothesis:
    name: str
    fn: Callable[[Any], Any]

    def __call__(self, instance):
        return self.fn(instance)


def make_hypothesis(name: str) -> Hypothesis:
    """``constant:<label>`` or ``threshold:<t>`` (predicts 1 iff instance >= t)."""
    kind, _, arg = name.partition(":")
    if kind == "constant":
        label = int(arg)
        return Hypothesis(name, lambda a: label)
    if kind == "threshold":
        t = float(arg)
        return Hypothesis(name, lambda a: int(a >= t))
    raise ValueError(f"unknown hypothesis {name!r}")


def zero_one_loss(pred, true) -> float:
    return float(pred != true)


def absolute_loss(pred, true) -> float:
    return min(1.0, abs(float(pred) - float(true)))


LOSSES = {"zero_one": zero_one_loss, "absolute": absolute_loss}


def majority_label(transcript: Prefix, hypotheses: Sequence[Hypothesis]) -> int:
    """Index of ``constant:1`` if most labels are 1, else of ``constant:0``."""
    ones = sum(1 for _, b in transcript if b == 1)
    label = 1 if 2 * ones > len(transcript) else 0
    return [h.name for h in hypotheses].index(f"constant:{label}")


def erm(transcript: Prefix, hypotheses: Sequence[Hypothesis]) -> int:
    """Empirical risk minimizer; ties go to the earliest hypothesis."""
    best, best_err = 0, math.inf
    for j, h in enumerate(hypotheses):
        err = sum(1 for a, b in transcript if h(a) != b)
        if err < best_err:
            best, best_err = j, err
    return best


def constant(transcript: Prefix, hypotheses: Sequence[Hypothesis]) -> int:
    """Ignore the data and output the first hypothesis."""
    return 0


AGGREGATORS = {"majority_label": majority_label, "erm": erm, "constant": constant}


@dataclass(frozen=True, eq=False)
class ProtocolSpec:
    name: str
    m: int
    owner_map: tuple[int, ...]
    party_distributions: tuple[Mapping[Example, float], ...]
    test_distribution: Mapping[Example, float]
    hypotheses: tuple[Hypothesis, ...]
    aggregator: str
    loss: str = "zero_one"
    alpha: float = 0.5
    target: Optional[Example] = None

    def __post_init__(self):
        if self.m < 1 or len(self.party_distributions) != self.m:
            raise ValueError("need one example distribution per party")
        if not self.owner_map:
            raise ValueError("protocol has no rounds")
        if any(not 0 <= w < self.m for w in self.owner_map):
            raise OutOfRange("owner map references an unknown party")
        for d in (*self.party_distributions, self.test_distribution):
            total = math.fsum(d.values())
            if abs(total - 1.0) > NORMALIZATION_TOL or min(d.values()) < 0:
                raise ValueError(f"example distribution sums to {total!r}")
        if self.aggregator not in AGGREGATORS:
            raise ValueError(f"unknown aggregator {self.aggregator!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if not self.hypotheses:
            raise ValueError("empty hypothesis class")

    @property
    def n(self) -> int:
        return len(self.owner_map)

    @property
    def boolean_loss(self) -> bool:
        return self.loss == "zero_one"

    def loss_fn(self, pred, true) -> float:
        return LOSSES[self.loss](pred, true)

    def aggregate(self, transcript: Prefix) -> int:
        return AGGREGATORS[self.aggregator](transcript, self.hypotheses)

    @functools.cached_property
    def risks(self) -> tuple[float, ...]:
        """Exact risk of every hypothesis over the test distribution."""
        return tuple(
            math.fsum(q * self.loss_fn(h(a), b) for (a, b), q in self.test_distribution.items())
            for h in self.hypotheses
        )

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "m": self.m,
            "owner_map": list(self.owner_map),
            "party_distributions": [[[list(e), q] for e, q in d.items()] for d in self.party_distributions],
            "test_distribution": [[list(e), q] for e, q in self.test_distribution.items()],
            "hypotheses": [h.name for h in self.hypotheses],
            "aggregator": self.aggregator,
            "loss": self.loss,
            "alpha": self.alpha,
            "target": list(self.target) if self.target is not None else None,
        }


def protocol_from_json(obj: Mapping) -> ProtocolSpec:
    if "preset" in obj:
        return preset(obj["preset"])

    def dist(rows):
        return {_freeze(e): float(q) for e, q in rows}

    target = obj.get("target")
    return ProtocolSpec(
        name=obj.get("name", "custom"),
        m=int(obj["m"]),
        owner_map=tuple(int(w) for w in obj["owner_map"]),
        party_distributions=tuple(dist(d) for d in obj["party_distributions"]),
        test_distribution=dist(obj["test_distribution"]),
        hypotheses=tuple(make_hypothesis(h) for h in obj["hypotheses"]),
        aggregator=obj["aggregator"],
        loss=obj.get("loss", "zero_one"),
        alpha=float(obj.get("alpha", 0.5)),
        target=_freeze(target) if target is not None else None,
    )


# -- presets ---------------------------------------------------------------


def majority_preset(bias: float = 0.7, m: int = 3) -> ProtocolSpec:
    """Each party sends a bit ``b ~ Bernoulli(bias)`` as the example ``(b, b)``."""
    d = {(0, 0): 1.0 - bias, (1, 1): bias}
    return ProtocolSpec(
        name="majority",
        m=m,
        owner_map=tuple(range(m)),
        party_distributions=(d,) * m,
        test_distribution={(1, 1): 1.0},
        hypotheses=(make_hypothesis("constant:0"), make_hypothesis("constant:1")),
        aggregator="majority_label",
        alpha=0.5,
        target=(1, 1),
    )


def noisy_majority_preset(bias: float = 0.7, flip: float = 0.1, m: int = 3) -> ProtocolSpec:
    d = {
        (0, 0): (1 - bias) * (1 - flip),
        (0, 1): (1 - bias) * flip,
        (1, 1): bias * (1 - flip),
        (1, 0): bias * flip,
    }
    return ProtocolSpec(
        name="noisy-label-majority",
        m=m,
        owner_map=tuple(range(m)),
        party_distributions=(d,) * m,
        test_distribution={(1, 1): 1.0},
        hypotheses=(make_hypothesis("constant:0"), make_hypothesis("constant:1")),
        aggregator="majority_label",
        alpha=0.5,
        target=(1, 1),
    )


def threshold_erm_preset(points: int = 10, threshold: int = 5, m: int = 3, alpha: float = 0.1) -> ProtocolSpec:
    """Instances uniform on ``range(points)``, label ``[x >= threshold]``, ERM over all thresholds."""
    d = {(x, int(x >= threshold)): 1.0 / points for x in range(points)}
    return ProtocolSpec(
        name="threshold-ERM",
        m=m,
        owner_map=tuple(range(m)),
        party_distributions=(d,) * m,
        test_distribution=d,
        hypotheses=tuple(make_hypothesis(f"threshold:{t}") for t in range(points + 1)),
        aggregator="erm",
        alpha=alpha,
        target=(0, 0),
    )


PRESETS = {
    "majority": majority_preset,
    "threshold-ERM": threshold_erm_preset,
    "noisy-label-majority": noisy_majority_preset,
}


def preset(name: str) -> ProtocolSpec:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


# -- process and objectives ----------------------------------------------


@functools.lru_cache(maxsize=32)
def protocol_as_process(spec: ProtocolSpec) -> ExplicitProcess:
    return ExplicitProcess.product([spec.party_distributions[w] for w in spec.owner_map])


@dataclass(frozen=True)
class AdversaryObjective:
    kind: str
    target: Optional[Example] = None

    def __post_init__(self):
        if self.kind not in (CONFIDENCE, RISK, TARGETED):
            raise ValueError(f"unknown objective kind {self.kind!r}")


def objective_for(spec: ProtocolSpec, kind: str, target: Optional[Example] = None) -> AdversaryObjective:
    if kind == TARGETED:
        target = target if target is not None else spec.target
        if target is None:
            raise ValueError("targeted objective needs a target example")
        return AdversaryObjective(TARGETED, _freeze(target))
    return AdversaryObjective(kind)


@functools.lru_cache(maxsize=128)
def objective_function(spec: ProtocolSpec, obj: AdversaryObjective) -> ObjectiveFunction:
    """The transcript objective the adversary biases.

    confidence: 1 iff the output risk exceeds ``alpha``; risk: the output
    risk; targeted: the output's loss on the target example.
    """
    risks = spec.risks
    if obj.kind == CONFIDENCE:
        alpha = spec.alpha

        def fn(t):
            return float(risks[spec.aggregate(t)] > alpha)

        boolean = True
    elif obj.kind == RISK:

        def fn(t):
            return risks[spec.aggregate(t)]

        boolean = False
    else:
        a, b = obj.target

        def fn(t):
            return spec.loss_fn(spec.hypotheses[spec.aggregate(t)](a), b)

        boolean = spec.boolean_loss
    return ObjectiveFunction(f"{spec.name}:{obj.kind}", functools.lru_cache(maxsize=None)(fn), boolean)


def honest_confidence(spec: ProtocolSpec) -> float:
    """``Pr[Risk(G(transcript)) <= alpha]`` under honest play."""
    proc = protocol_as_process(spec)
    f1 = objective_function(spec, AdversaryObjective(CONFIDENCE))
    return 1.0 - fhat_table(proc, f1)[()]


def honest_error(spec: ProtocolSpec, target: Optional[Example] = None) -> float:
    """``Err(d)`` for a target example, or the total error ``Err(test)`` without one."""
    proc = protocol_as_process(spec)
    obj = AdversaryObjective(TARGETED, _freeze(target)) if target is not None else AdversaryObjective(RISK)
    return fhat_table(proc, objective_function(spec, obj))[()]


def risk_variance(spec: ProtocolSpec) -> float:
    """Variance of the output hypothesis' risk under honest play."""
    proc = protocol_as_process(spec)
    return moments(proc, objective_function(spec, AdversaryObjective(RISK)), 1.0).nu


# -- adversary -------------------------------------------------------------


@dataclass(frozen=True)
class PoisonAdversary:
    spec: ProtocolSpec = field(repr=False)
    objective: AdversaryObjective
    k: int
    p: float
    eps: float
    covering: CoveringDistribution = field(repr=False)
    mu: float
    k_budget: int

    @property
    def parties(self) -> Optional[frozenset[int]]:
        return self.covering.parties

    @property
    def f(self) -> ObjectiveFunction:
        return objective_function(self.spec, self.objective)

    @property
    def strategy(self) -> TamperStrategy:
        return TamperStrategy.iterated(self.k_budget)


def assemble_adversary(
    spec: ProtocolSpec,
    objective: AdversaryObjective,
    k: int,
    p: float,
    eps: float,
    parties: Optional[Sequence[int]] = None,
) -> PoisonAdversary:
    """Party covering plus k-rejection sampling sized by ``required_iterations``.

    Without ``parties`` the coalition is drawn uniformly per run; with it the
    coalition is fixed (static corruption of a chosen set).
    """
    if not 1 <= k <= spec.m:
        raise OutOfRange(f"k={k} must satisfy 1 <= k <= m={spec.m}")
    if not 0.0 <= p <= 1.0:
        raise OutOfRange(f"p={p} outside [0, 1]")
    if not 0.0 < eps <= 1.0:
        raise OutOfRange(f"eps={eps} outside (0, 1]")
    proc = protocol_as_process(spec)
    f = objective_function(spec, objective)
    mu = fhat_table(proc, f)[()]
    if mu <= 0.0:
        raise ZeroMu(f"honest {objective.kind} objective has expectation 0; nothing to amplify")
    cov = make_party_covering(spec.owner_map, k, p, spec.m)
    if parties is not None:
        cov = condition_on_parties(cov, parties)
    return PoisonAdversary(spec, objective, k, p, eps, cov, mu, required_iterations(spec.n, eps, mu))


# -- reports ---------------------------------------------------------------

CSV_COLUMNS = ("preset", "objective", "k", "p", "eps", "mode", "honest", "attacked", "bound", "se", "trials", "seed")


@dataclass
class AttackReport:
    preset: str
    objective: str
    k: int
    p: float
    eps: float
    mode: str
    honest: float
    attacked: float
    bound: float
    se: float
    trials: int
    seed: Optional[int]
    exact: bool
    direction: str  # "upper": attacked must not exceed bound; "lower": must reach it
    honest_objective: float
    attacked_objective: float
    tampering_bound: Optional[float]
    k_budget: int
    wall_time_per_trial: float
    parties: Optional[list[int]] = None
    per_party: dict[str, float] = field(default_factory=dict)
    covering_average: Optional[float] = None
    max_message_distance: float = 0.0
    max_iterations: int = 0
    variance: Optional[float] = None

    @property
    def margin(self) -> float:
        """Slack used when comparing with the bound: 1e-9 exact, 4 SE otherwise."""
        return EXACT_TOL if self.exact else 4.0 * self.se

    @property
    def meets_bound(self) -> bool:
        if self.direction == "upper":
            return self.attacked <= self.bound + self.margin
        return self.attacked >= self.bound - self.margin

    def to_json(self) -> dict:
        out = asdict(self)
        out["meets_bound"] = self.meets_bound
        return out

    def csv_row(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]


def _bound_values(spec: ProtocolSpec, adv: PoisonAdversary, attacked_f: float, eps_bound: float):
    """Map an attacked objective mean to (honest, attacked, bound, direction, nu)."""
    k, m, p = adv.k, spec.m, adv.p
    if adv.objective.kind == CONFIDENCE:
        conf = 1.0 - adv.mu
        return conf, 1.0 - attacked_f, bounds.mpp_confidence_bound(conf, p, k, m, eps_bound), "upper", None
    if adv.objective.kind == RISK:
        nu = risk_variance(spec)
        return adv.mu, attacked_f, bounds.mpp_error_bound(adv.mu, nu, p, k, m, eps_bound), "lower", nu
    return adv.mu, attacked_f, bounds.mpp_targeted_bound(adv.mu, p, k, m, eps_bound), "lower", None


def _coalitions(cov: CoveringDistribution) -> list[frozenset[int]]:
    if cov.parties is not None:
        return [cov.parties]
    return [frozenset(c) for c in itertools.combinations(range(cov.m), cov.k)]


def _message_distance(proc: ExplicitProcess, f, strategy, p: float, pfx: Prefix) -> float:
    """Distance between the corrupted message law and the honest one at ``pfx``.

    A corrupted round is tampered with probability ``p``, so its law is the
    mixture ``(1-p) honest + p tampered``.
    """
    honest = proc.tree[pfx]
    tam = tampered_conditional(proc, f, strategy, pfx)
    if any(q > 0 and s not in honest for s, q in tam.items()):
        raise PlausibilityViolation(f"tampered message at {pfx!r} leaves the honest support")
    mix = {s: (1.0 - p) * honest[s] + p * tam.get(s, 0.0) for s in honest}
    d = statistical_distance(mix, honest)
    if d > p + DISTANCE_TOL:
        raise PlausibilityViolation(f"message at {pfx!r} is {d} > p={p} from honest")
    return d


def _exact_distance_audit(proc: ExplicitProcess, adv: PoisonAdversary, strategy) -> float:
    worst = 0.0
    for c in _coalitions(adv.covering):
        rounds = adv.covering.rounds_of(c)
        for pfx in proc.prefixes():
            if len(pfx) in rounds:
                worst = max(worst, _message_distance(proc, adv.f, strategy, adv.p, pfx))
    return worst


def run_attack(
    spec: ProtocolSpec,
    adv: PoisonAdversary,
    mode: str = "exact",
    trials: int = 10_000,
    seed: int = 0,
) -> AttackReport:
    """Measure the attacked objective and compare it with the matching bound.

    ``exact`` evaluates the ideal rejection sampler by exhaustive DP and uses
    ``eps = 0`` in the bound. ``montecarlo`` runs ``trials`` executions of
    k-rejection sampling, each on its own stream derived from ``seed``.
    Plausibility and the per-message distance budget are asserted throughout.
    """
    proc = protocol_as_process(spec)
    f = adv.f
    q = adv.covering.marginal(0) if adv.parties is None else None
    t0 = time.perf_counter()
    if mode == "exact":
        strategy = TamperStrategy.ideal()
        attacked_f = exact_covering_average(proc, f, adv.covering, strategy)
        se, n_trials, max_it, eps_bound = 0.0, 0, 0, 0.0
        dist = _exact_distance_audit(proc, adv, strategy)
        elapsed = time.perf_counter() - t0
    elif mode == "montecarlo":
        if trials < 1:
            raise OutOfRange("trials must be >= 1")
        strategy = adv.strategy
        total = total_sq = 0.0
        max_it = 0
        dist = 0.0
        seen: dict[Prefix, float] = {}
        for t in range(trials):
            rng = random.Random(derive_seed(seed, ["trial", t]))
            plan = adv.covering.sample(rng)
            exe = run_tampered_execution(proc, f, strategy, plan, rng)
            v = exe.objective_value
            total += v
            total_sq += v * v
            max_it = max(max_it, exe.max_iterations)
            for j in adv.covering.rounds_of(plan.parties):
                pfx = exe.sequence[:j]
                if pfx not in seen:
                    seen[pfx] = _message_distance(proc, f, strategy, adv.p, pfx)
                dist = max(dist, seen[pfx])
        attacked_f = total / trials
        var = max(0.0, (total_sq - trials * attacked_f**2) / (trials - 1)) if trials > 1 else 0.0
        se = math.sqrt(var / trials)
        n_trials, eps_bound = trials, adv.eps
        elapsed = (time.perf_counter() - t0) / trials
    else:
        raise ValueError(f"unknown mode {mode!r}")

    honest, attacked, bound, direction, nu = _bound_values(spec, adv, attacked_f, eps_bound)
    tb = None
    if q is not None and adv.mu > 0:
        mom = moments(proc, f, q)
        tb = bounds.tampering_bound(mom.mu, mom.moment_1p, q)
    return AttackReport(
        preset=spec.name,
        objective=adv.objective.kind,
        k=adv.k,
        p=adv.p,
        eps=adv.eps if mode == "montecarlo" else 0.0,
        mode=mode,
        honest=honest,
        attacked=attacked,
        bound=bound,
        se=se,
        trials=n_trials,
        seed=seed if mode == "montecarlo" else None,
        exact=mode == "exact",
        direction=direction,
        honest_objective=adv.mu,
        attacked_objective=attacked_f,
        tampering_bound=tb,
        k_budget=adv.k_budget,
        wall_time_per_trial=elapsed,
        parties=sorted(adv.parties) if adv.parties is not None else None,
        max_message_distance=dist,
        max_iterations=max_it,
        variance=nu,
    )


def best_fixed_corruption(
    spec: ProtocolSpec,
    objective: AdversaryObjective,
    k: int,
    p: float,
    eps: float = 1.0,
    mode: str = "exact",
    trials: int = 10_000,
    seed: int = 0,
    max_subsets: int = 4096,
) -> tuple[frozenset[int], AttackReport]:
    """Evaluate every fixed coalition and keep the strongest one.

    Strength is the attacked objective mean; ties within 1e-12 go to the
    lexicographically smallest coalition. The returned report carries every
    coalition's value and their mean, which equals the random-coalition
    covering average.
    """
    if not 1 <= k <= spec.m:
        raise OutOfRange(f"k={k} must satisfy 1 <= k <= m={spec.m}")
    if math.comb(spec.m, k) > max_subsets:
        raise TooManySubsets(f"C({spec.m},{k}) coalitions exceed {max_subsets}")
    best_c, best_rep = None, None
    per_party = {}
    for c in itertools.combinations(range(spec.m), k):
        adv = assemble_adversary(spec, objective, k, p, eps, parties=c)
        rep = run_attack(spec, adv, mode, trials, derive_seed(seed, ["coalition", *c]))
        per_party[",".join(map(str, c))] = rep.attacked_objective
        if best_rep is None or rep.attacked_objective > best_rep.attacked_objective + 1e-12:
            best_c, best_rep = frozenset(c), rep
    best_rep.per_party = per_party
    best_rep.covering_average = math.fsum(per_party.values()) / len(per_party)
    best_rep.seed = seed if mode == "montecarlo" else None
    return best_c, best_rep
