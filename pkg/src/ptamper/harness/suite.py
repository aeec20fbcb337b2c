"""The acceptance battery run by ``ptamper --command suite`` and the tests.

Each criterion returns a :class:`CriterionResult`; ``passed`` is computed
at the tolerance fixed below and never adjusted afterwards.
"""

from __future__ import annotations

import math
import random
import time
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .. import bounds
from ..covering import TamperPlan
from ..errors import PlausibilityViolation
from ..instances import Instance, battery
from ..mpplearn import (
    CONFIDENCE,
    RISK,
    TARGETED,
    AdversaryObjective,
    assemble_adversary,
    best_fixed_corruption,
    honest_error,
    preset,
    run_attack,
)
from ..oracle import (
    exact_attacked_expectation,
    exact_covering_average,
    moments,
    verify_covering_identity,
    verify_likelihood_ratio,
)
from ..process import fhat_table
from ..seeding import derive_seed
from ..tamper import TamperStrategy, required_iterations, run_tampered_execution

LIKELIHOOD_TOL = 1e-9
BOUND_TOL = 1e-9
IDENTITY_TOL = 1e-8
GAP_TOL = 1e-9
DISTANCE_TOL = 1e-12
SE_MULT = 4.0

BATTERY_SIZE = 50
P_GRID = (0.1, 0.25, 0.5, 0.9, 1.0)
EPS_GRID = (0.1, 0.05)
MC_TRIALS = 10_000
COHERENCE_TRIALS = 100_000
COHERENCE_TRIPLES = 20
LAWS = 1_000
MPP_PRESETS = ("majority", "threshold-ERM")
MPP_CELLS = ((1, 3), (2, 3), (3, 3))
MPP_P = (0.5, 1.0)
MAJORITY_TARGETED_FLOOR = 0.47733


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    summary: str
    runtime: float = 0.0
    details: list[dict] = field(default_factory=list)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.number}: {self.name} -- {self.summary} ({self.runtime:.1f}s)"

    def to_json(self) -> dict:
        return {
            "criterion": self.number,
            "name": self.name,
            "status": "pass" if self.passed else "fail",
            "summary": self.summary,
            "runtime": self.runtime,
            "details": self.details,
        }


@dataclass
class SuiteContext:
    seed: int = 0
    battery_size: int = BATTERY_SIZE
    mc_trials: int = MC_TRIALS
    coherence_trials: int = COHERENCE_TRIALS
    laws: int = LAWS
    _battery: list[Instance] | None = None
    violations: list[str] = field(default_factory=list)
    max_distance_ratio: float = 0.0

    @property
    def instances(self) -> list[Instance]:
        if self._battery is None:
            self._battery = battery(self.seed, self.battery_size)
        return self._battery


def _timed(fn: Callable[[SuiteContext], CriterionResult]):
    def wrapper(ctx: SuiteContext) -> CriterionResult:
        t0 = time.perf_counter()
        res = fn(ctx)
        res.runtime = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def likelihood_ratio(ctx: SuiteContext) -> CriterionResult:
    worst = 0.0
    for inst in ctx.instances:
        worst = max(worst, verify_likelihood_ratio(inst.proc, inst.f))
    return CriterionResult(
        1,
        "likelihood-ratio law",
        worst <= LIKELIHOOD_TOL,
        f"{len(ctx.instances)} instances, max residual {worst:.3e} (tol {LIKELIHOOD_TOL:g})",
    )


@_timed
def unbounded_attack(ctx: SuiteContext) -> CriterionResult:
    """Exact covering average against the rejection-sampling bias bound."""
    worst = math.inf
    worst_bool = math.inf
    checks = 0
    details = []
    for inst in ctx.instances:
        for p in P_GRID:
            for cov in inst.coverings(p):
                q = cov.target_p
                mom = moments(inst.proc, inst.f, q)
                avg = exact_covering_average(inst.proc, inst.f, cov)
                slack = avg - bounds.tampering_bound(mom.mu, mom.moment_1p, q)
                worst = min(worst, slack)
                checks += 1
                if inst.f.boolean:
                    worst_bool = min(worst_bool, avg - bounds.boolean_bound(mom.mu, q))
                if slack < -BOUND_TOL:
                    details.append({"instance": inst.label, "covering": cov.to_json(), "slack": slack})
    ok = worst >= -BOUND_TOL and worst_bool >= -BOUND_TOL
    return CriterionResult(
        2,
        "unbounded-attack bound",
        ok,
        f"{checks} (instance, covering) pairs, min slack {worst:.3e}, Boolean min slack {worst_bool:.3e}",
        details=details,
    )


@_timed
def covering_identity(ctx: SuiteContext) -> CriterionResult:
    worst = 0.0
    checked = degenerate = 0
    for inst in ctx.instances:
        for p in P_GRID:
            for cov in inst.coverings(p):
                for y, _ in inst.proc.support():
                    res = verify_covering_identity(inst.proc, inst.f, cov, y)
                    if res.status == "degenerate":
                        degenerate += 1
                        continue
                    checked += 1
                    worst = max(worst, res.residual)
    return CriterionResult(
        3,
        "covering identity",
        worst <= IDENTITY_TOL and checked > 0,
        f"{checked} sequences checked, {degenerate} degenerate, max log residual {worst:.3e} (tol {IDENTITY_TOL:g})",
    )


def _mc_tampered_mean(inst: Instance, cov, strategy, trials: int, seed_labels: list) -> tuple[float, float, int]:
    total = total_sq = 0.0
    max_it = 0
    for t in range(trials):
        rng = random.Random(derive_seed(0, [*seed_labels, t]))
        plan = cov.sample(rng)
        exe = run_tampered_execution(inst.proc, inst.f, strategy, plan, rng)
        v = exe.objective_value
        total += v
        total_sq += v * v
        max_it = max(max_it, exe.max_iterations)
    mean = total / trials
    var = max(0.0, (total_sq - trials * mean * mean) / (trials - 1))
    return mean, math.sqrt(var / trials), max_it


@_timed
def polynomial_attack(ctx: SuiteContext) -> CriterionResult:
    """k-rejection sampling with the sample-complexity budget, IID p = 0.5 covering."""
    ok = True
    details = []
    p = 0.5
    for inst in ctx.instances[:5]:
        cov = inst.coverings(p)[0]
        mom = moments(inst.proc, inst.f, p)
        bound = bounds.tampering_bound(mom.mu, mom.moment_1p, p)
        for eps in EPS_GRID:
            budget = required_iterations(inst.proc.n, eps, mom.mu)
            mean, se, max_it = _mc_tampered_mean(
                inst, cov, TamperStrategy.iterated(budget), ctx.mc_trials, [ctx.seed, "poly", inst.label, str(eps)]
            )
            cell_ok = mean >= bound - eps - SE_MULT * se and max_it <= budget
            ok &= cell_ok
            details.append(
                {"instance": inst.label, "eps": eps, "budget": budget, "mean": mean, "se": se,
                 "bound": bound, "max_iterations": max_it, "pass": cell_ok}
            )
    worst = min(d["mean"] - (d["bound"] - d["eps"] - SE_MULT * d["se"]) for d in details)
    return CriterionResult(
        4,
        "polynomial-time attack",
        ok,
        f"{len(details)} cells at {ctx.mc_trials} trials, min margin {worst:.4f}, "
        f"max iterations/budget {max(d['max_iterations'] / d['budget'] for d in details):.2e}",
        details=details,
    )


@_timed
def variance_gap(ctx: SuiteContext) -> CriterionResult:
    rng = np.random.default_rng(derive_seed(ctx.seed, ["laws"]))
    worst_sharp = worst_weak = math.inf
    for _ in range(ctx.laws):
        size = int(rng.integers(1, 7))
        vals = rng.random(size)
        # endpoints are where the gap is tightest
        vals[rng.random(size) < 0.2] = 1.0
        vals[rng.random(size) < 0.1] = 0.0
        probs = rng.dirichlet(np.ones(size))
        p = float(rng.random())
        mu, nu, m1p = bounds.law_moments(vals, probs, p)
        if mu <= 0.0:
            continue
        gamma = bounds.tampering_bound(mu, m1p, p) - mu
        jg = bounds.jensen_gap_bound(mu, nu, p)
        worst_sharp = min(worst_sharp, gamma - jg.sharp)
        worst_weak = min(worst_weak, jg.sharp - jg.weak)
    ok = worst_sharp >= -GAP_TOL and worst_weak >= -GAP_TOL
    return CriterionResult(
        5,
        "variance gap chain",
        ok,
        f"{ctx.laws} laws, min(gamma - sharp) {worst_sharp:.3e}, min(sharp - weak) {worst_weak:.3e}",
    )


def _mpp_cells():
    for name in MPP_PRESETS:
        spec = preset(name)
        # targeted error is only meaningful where the honest error is positive
        targets = [d for d in spec.test_distribution if honest_error(spec, d) > 0]
        for k, m in MPP_CELLS:
            assert m == spec.m
            for p in MPP_P:
                yield spec, k, p, targets


@_timed
def poisoning_bounds(ctx: SuiteContext) -> CriterionResult:
    """Confidence, total-error and targeted-error bounds for the strongest fixed coalition."""
    details = []
    for spec, k, p, targets in _mpp_cells():
        objs = [AdversaryObjective(CONFIDENCE), AdversaryObjective(RISK)]
        objs += [AdversaryObjective(TARGETED, d) for d in targets]
        for obj in objs:
            coalition, rep = best_fixed_corruption(spec, obj, k, p)
            details.append(
                {"preset": spec.name, "objective": obj.kind, "target": obj.target, "k": k, "p": p,
                 "coalition": sorted(coalition), "honest": rep.honest, "attacked": rep.attacked,
                 "bound": rep.bound, "direction": rep.direction, "pass": rep.meets_bound}
            )
    maj = preset("majority")
    _, rep = best_fixed_corruption(maj, AdversaryObjective(TARGETED, maj.target), 1, 1.0)
    concrete = rep.attacked >= MAJORITY_TARGETED_FLOOR - BOUND_TOL
    failed = [d for d in details if not d["pass"]]
    by_preset = {}
    for d in details:
        tot, bad = by_preset.get(d["preset"], (0, 0))
        by_preset[d["preset"]] = (tot + 1, bad + (not d["pass"]))
    summary = ", ".join(f"{n}: {t - b}/{t} cells pass" for n, (t, b) in by_preset.items())
    summary += f"; majority targeted k=1 p=1 attains {rep.attacked:.5f} (>= {MAJORITY_TARGETED_FLOOR}: {concrete})"
    return CriterionResult(6, "poisoning bounds at desk scale", not failed and concrete, summary, details=failed)


@_timed
def plausibility(ctx: SuiteContext) -> CriterionResult:
    """Support and distance assertions over exact and Monte Carlo poisoning runs."""
    worst_excess = -math.inf
    runs = 0
    violations = list(ctx.violations)
    for spec, k, p, _ in _mpp_cells():
        for kind in (CONFIDENCE, RISK, TARGETED):
            obj = AdversaryObjective(kind, spec.target if kind == TARGETED else None)
            for parties in [None, (0,)] if k == 1 else [None]:
                try:
                    adv = assemble_adversary(spec, obj, k, p, 0.1, parties=parties)
                    rep = run_attack(spec, adv, "exact")
                    runs += 1
                    worst_excess = max(worst_excess, rep.max_message_distance - p)
                    if ctx.mc_trials:
                        mc = run_attack(spec, adv, "montecarlo", trials=max(1, ctx.mc_trials // 20),
                                        seed=derive_seed(ctx.seed, ["plaus", spec.name, kind, k, str(p)]))
                        runs += 1
                        worst_excess = max(worst_excess, mc.max_message_distance - p)
                except PlausibilityViolation as exc:
                    violations.append(str(exc))
    ok = not violations and worst_excess <= DISTANCE_TOL
    return CriterionResult(
        7,
        "plausibility and distance budget",
        ok,
        f"{runs} runs, {len(violations)} violations, max(distance - p) {worst_excess:.3e}",
        details=[{"violation": v} for v in violations],
    )


@_timed
def averaging(ctx: SuiteContext) -> CriterionResult:
    worst = math.inf
    cells = 0
    for spec, k, p, _ in _mpp_cells():
        for kind in (CONFIDENCE, RISK, TARGETED):
            obj = AdversaryObjective(kind, spec.target if kind == TARGETED else None)
            _, best = best_fixed_corruption(spec, obj, k, p)
            avg = run_attack(spec, assemble_adversary(spec, obj, k, p, 1.0), "exact").attacked_objective
            worst = min(worst, best.attacked_objective - avg)
            cells += 1
    return CriterionResult(
        8, "averaging argument", worst >= -BOUND_TOL, f"{cells} cells, min(best - average) {worst:.3e}"
    )


@_timed
def coherence(ctx: SuiteContext) -> CriterionResult:
    """Monte Carlo runs of the ideal sampler against the exact DP value."""
    rng = random.Random(derive_seed(ctx.seed, ["coherence"]))
    small = [inst for inst in ctx.instances if inst.proc.n <= 4] or ctx.instances
    worst = 0.0
    details = []
    for j in range(COHERENCE_TRIPLES):
        inst = small[j % len(small)]
        s = frozenset(i for i in range(inst.proc.n) if rng.random() < 0.5)
        exact = exact_attacked_expectation(inst.proc, inst.f, s)
        plan = TamperPlan(s)
        total = total_sq = 0.0
        stream = random.Random(derive_seed(ctx.seed, ["coherence", j]))
        for _ in range(ctx.coherence_trials):
            v = run_tampered_execution(inst.proc, inst.f, TamperStrategy.ideal(), plan, stream).objective_value
            total += v
            total_sq += v * v
        n = ctx.coherence_trials
        mean = total / n
        se = math.sqrt(max(0.0, (total_sq - n * mean * mean) / (n - 1)) / n)
        z = abs(mean - exact) / se if se > 0 else (0.0 if abs(mean - exact) <= 1e-12 else math.inf)
        worst = max(worst, z)
        details.append({"instance": inst.label, "S": sorted(s), "exact": exact, "mc": mean, "se": se, "z": z})
    return CriterionResult(
        9, "oracle / Monte Carlo coherence", worst <= SE_MULT,
        f"{COHERENCE_TRIPLES} triples at {ctx.coherence_trials} trials, max |z| {worst:.2f}", details=details,
    )


CRITERIA = {
    1: likelihood_ratio,
    2: unbounded_attack,
    3: covering_identity,
    4: polynomial_attack,
    5: variance_gap,
    6: poisoning_bounds,
    7: plausibility,
    8: averaging,
    9: coherence,
}


def run_suite(ctx: SuiteContext | None = None, only=None) -> list[CriterionResult]:
    ctx = ctx or SuiteContext()
    return [CRITERIA[i](ctx) for i in sorted(CRITERIA) if only is None or i in only]
