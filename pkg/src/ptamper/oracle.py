"""Brute-force exact inference over small explicit processes.

Everything here enumerates the probability tree; nothing samples. These
routines are the reference the Monte Carlo paths are checked against.
"""

from __future__ import annotations

import functools
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from typing import Optional

from .covering import DEFAULT_COVERING_CAP, CoveringDistribution
from .errors import SupportTooLarge, UnsupportedFlavor, ZeroMu
from .process import (
    DEFAULT_SUPPORT_CAP,
    Distribution,
    ExplicitProcess,
    ObjectiveFunction,
    Prefix,
    RandomProcess,
    check_support_cap,
    fhat_table,
)
from .tamper import IDEAL, TamperStrategy

LIKELIHOOD_TOL = 1e-9
IDENTITY_TOL = 1e-8


@dataclass(frozen=True)
class ExactLaw:
    atoms: tuple[tuple[Prefix, float], ...]

    def expectation(self, f: ObjectiveFunction) -> float:
        return math.fsum(q * f(seq) for seq, q in self.atoms)

    def as_dict(self) -> dict[Prefix, float]:
        return dict(self.atoms)

    @property
    def total(self) -> float:
        return math.fsum(q for _, q in self.atoms)


@dataclass(frozen=True)
class Moments:
    mu: float
    nu: float
    moment_1p: float
    p: float


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one numeric verification; ``status`` is pass, fail or degenerate."""

    name: str
    residual: float
    tolerance: float
    status: str
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status != "fail"

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "residual": self.residual,
            "tolerance": self.tolerance,
            "status": self.status,
            "detail": self.detail,
        }


def _explicit(proc: RandomProcess, cap: int) -> ExplicitProcess:
    if not isinstance(proc, ExplicitProcess):
        raise UnsupportedFlavor("exact inference needs an explicit process")
    check_support_cap(proc, cap)
    return proc


def exact_law(proc: RandomProcess, cap: int = DEFAULT_SUPPORT_CAP) -> ExactLaw:
    proc = _explicit(proc, cap)
    return ExactLaw(tuple(proc.support()))


def moments(proc: RandomProcess, f: ObjectiveFunction, p: float, cap: int = DEFAULT_SUPPORT_CAP) -> Moments:
    law = exact_law(proc, cap)
    vals = [(q, f(seq)) for seq, q in law.atoms]
    mu = math.fsum(q * v for q, v in vals)
    nu = math.fsum(q * (v - mu) ** 2 for q, v in vals)
    m1p = math.fsum(q * v ** (1.0 + p) for q, v in vals)
    return Moments(mu, nu, m1p, p)


def statistical_distance(a: Mapping, b: Mapping) -> float:
    """Half the L1 distance between two finite distributions."""
    keys = set(a) | set(b)
    return 0.5 * math.fsum(abs(a.get(s, 0.0) - b.get(s, 0.0)) for s in keys)


def tampered_conditional(
    proc: ExplicitProcess, f: ObjectiveFunction, strategy: TamperStrategy, pfx: Prefix
) -> Distribution:
    """Exact next-block law a strategy induces at ``pfx``.

    With acceptance mass ``A = fhat(pfx)`` and per-symbol acceptance mass
    ``a_y = Pr[x = y | pfx] * fhat(pfx + y)``, the ideal law is ``a_y / A``
    and the k-truncated one is ``a_y (1 - (1-A)^k) / A + (1-A)^k Pr[x = y | pfx]``.
    Zero-mass prefixes fall back to the honest law.
    """
    honest = proc.tree[pfx]
    table = fhat_table(proc, f)
    acc = table[pfx]
    if acc <= 0.0:
        return dict(honest)
    a = {s: q * table[pfx + (s,)] for s, q in honest.items()}
    if strategy.kind == IDEAL:
        return {s: v / acc for s, v in a.items()}
    miss = (1.0 - acc) ** strategy.k
    return {s: a[s] * (1.0 - miss) / acc + miss * honest[s] for s in honest}


def truncated_acceptance_law(
    honest: Mapping, scores: Mapping, k: int
) -> Distribution:
    """k-rejection sampling law by direct recursion over the remaining budget.

    ``scores[y]`` is the partial expectation after appending ``y``. Kept
    separate from :func:`tampered_conditional` as a cross-check; cost is O(k).
    """
    acc = math.fsum(honest[s] * scores[s] for s in honest)
    law = dict(honest)  # budget exhausted: honest fallback
    for _ in range(k):
        law = {s: honest[s] * scores[s] + (1.0 - acc) * law[s] for s in honest}
    return law


@functools.lru_cache(maxsize=256)
def _strategy_tables(proc: ExplicitProcess, f: ObjectiveFunction, strategy: TamperStrategy):
    tables = {pfx: tampered_conditional(proc, f, strategy, pfx) for pfx in proc.prefixes()}
    order = sorted(proc.prefixes(), key=len, reverse=True)
    zero = frozenset(pfx for pfx in order if fhat_table(proc, f)[pfx] <= 0.0)
    return tables, order, zero


def exact_attacked_expectation(
    proc: RandomProcess,
    f: ObjectiveFunction,
    plan_set: Iterable[int],
    strategy: TamperStrategy = TamperStrategy.ideal(),
    cap: int = DEFAULT_SUPPORT_CAP,
    notes: Optional[list] = None,
) -> float:
    """``E[f(Y^S)]`` by backward induction over the prefix tree.

    When ``notes`` is a list, a message is appended if the tampered run can
    reach a zero-partial-expectation prefix inside ``S`` (honest fallback used).
    """
    proc = _explicit(proc, cap)
    plan_set = frozenset(plan_set)
    tables, order, zero = _strategy_tables(proc, f, strategy)
    fhat = fhat_table(proc, f)
    value: dict[Prefix, float] = {}
    for pfx in order:
        dist = tables[pfx] if len(pfx) in plan_set else proc.tree[pfx]
        value[pfx] = math.fsum(
            q * (value[pfx + (s,)] if len(pfx) + 1 < proc.n else fhat[pfx + (s,)])
            for s, q in dist.items()
            if q > 0.0
        )
    if notes is not None and zero and any(len(z) in plan_set for z in zero):
        law = tampered_law(proc, f, plan_set, strategy, cap)
        if any(_prefix_mass(law, z) > 0 for z in zero if len(z) in plan_set):
            notes.append("honest fallback used at a zero partial-expectation prefix")
    return value[()]


def _prefix_mass(law: ExactLaw, pfx: Prefix) -> float:
    return math.fsum(q for seq, q in law.atoms if seq[: len(pfx)] == pfx)


def tampered_law(
    proc: RandomProcess,
    f: ObjectiveFunction,
    plan_set: Iterable[int],
    strategy: TamperStrategy = TamperStrategy.ideal(),
    cap: int = DEFAULT_SUPPORT_CAP,
) -> ExactLaw:
    """Full distribution of ``Y^S`` (zero-probability sequences dropped)."""
    proc = _explicit(proc, cap)
    plan_set = frozenset(plan_set)
    tables, _, _ = _strategy_tables(proc, f, strategy)
    atoms = []
    stack: list[tuple[Prefix, float]] = [((), 1.0)]
    while stack:
        pfx, q = stack.pop()
        if len(pfx) == proc.n:
            atoms.append((pfx, q))
            continue
        dist = tables[pfx] if len(pfx) in plan_set else proc.tree[pfx]
        for s, r in reversed(list(dist.items())):
            if r > 0.0:
                stack.append((pfx + (s,), q * r))
    return ExactLaw(tuple(atoms))


def exact_covering_average(
    proc: RandomProcess,
    f: ObjectiveFunction,
    cov: CoveringDistribution,
    strategy: TamperStrategy = TamperStrategy.ideal(),
    cap: int = DEFAULT_SUPPORT_CAP,
    covering_cap: int = DEFAULT_COVERING_CAP,
) -> float:
    """``E_{S <- cov} E[f(Y^S)]``, summed in canonical subset order."""
    support = cov.enumerate_support(covering_cap)
    return math.fsum(w * exact_attacked_expectation(proc, f, s, strategy, cap) for s, w in support)


def verify_likelihood_ratio(proc: RandomProcess, f: ObjectiveFunction, cap: int = DEFAULT_SUPPORT_CAP) -> float:
    """Max over valid prefixes of ``|Pr[Y<=i]/Pr[X<=i] - fhat/mu|`` under full ideal tampering."""
    proc = _explicit(proc, cap)
    fhat = fhat_table(proc, f)
    mu = fhat[()]
    if mu <= 0.0:
        raise ZeroMu("likelihood ratio undefined for mu = 0")
    tables, _, _ = _strategy_tables(proc, f, TamperStrategy.ideal())
    worst = abs(1.0 - fhat[()] / mu)
    stack: list[tuple[Prefix, float, float]] = [((), 1.0, 1.0)]
    while stack:
        pfx, px, py = stack.pop()
        if len(pfx) == proc.n:
            continue
        tam = tables[pfx]
        for s, q in proc.tree[pfx].items():
            child = pfx + (s,)
            cx = px * q
            cy = py * tam.get(s, 0.0)
            worst = max(worst, abs(cy / cx - fhat[child] / mu))
            stack.append((child, cx, cy))
    return worst


def sequence_probability_under(
    proc: ExplicitProcess, f: ObjectiveFunction, plan_set: frozenset, y: Prefix, strategy: TamperStrategy
) -> float:
    """``Pr[Y^S = y]`` as a product of per-block conditionals along ``y``."""
    tables, _, _ = _strategy_tables(proc, f, strategy)
    q = 1.0
    for i in range(proc.n):
        pfx = y[:i]
        dist = tables[pfx] if i in plan_set else proc.tree[pfx]
        q *= dist.get(y[i], 0.0)
    return q


def verify_covering_identity(
    proc: RandomProcess,
    f: ObjectiveFunction,
    cov: CoveringDistribution,
    y: Sequence,
    strategy: TamperStrategy = TamperStrategy.ideal(),
    cap: int = DEFAULT_SUPPORT_CAP,
    covering_cap: int = DEFAULT_COVERING_CAP,
) -> CheckResult:
    """Compare ``sum_S w_S log(Pr[Y^S=y]/Pr[X=y])`` with ``p log(Pr[Y^[n]=y]/Pr[X=y])``.

    Sequences where some tampered probability vanishes are reported as
    degenerate: the log identity has no finite sides there.
    """
    proc = _explicit(proc, cap)
    y = tuple(y)
    px = proc.prefix_probability(y)
    if len(y) != proc.n or px <= 0.0:
        raise ValueError(f"{y!r} is not a support sequence")
    p = cov.target_p
    full = frozenset(range(proc.n))
    lhs = 0.0
    for s, w in cov.enumerate_support(covering_cap):
        py = sequence_probability_under(proc, f, s, y, strategy)
        if py <= 0.0:
            return CheckResult("covering_identity", math.nan, IDENTITY_TOL, "degenerate", f"Pr[Y^S=y]=0 for S={sorted(s)}")
        lhs += w * (math.log(py) - math.log(px))
    pfull = sequence_probability_under(proc, f, full, y, strategy)
    if pfull <= 0.0:
        return CheckResult("covering_identity", math.nan, IDENTITY_TOL, "degenerate", "Pr[Y^[n]=y]=0")
    rhs = p * (math.log(pfull) - math.log(px))
    residual = abs(lhs - rhs)
    return CheckResult("covering_identity", residual, IDENTITY_TOL, "pass" if residual <= IDENTITY_TOL else "fail")


def rejsam_second_moment_bound_gap(proc: RandomProcess, f: ObjectiveFunction, cov: CoveringDistribution, cap: int = DEFAULT_SUPPORT_CAP) -> float:
    """Exact attacked average minus ``sum_y Pr[X=y] f(y) (f(y)/mu)^p``.

    Nonnegative up to rounding whenever the averaging inequality over the
    covering holds for the ideal sampler.
    """
    proc = _explicit(proc, cap)
    law = exact_law(proc, cap)
    mu = law.expectation(f)
    if mu <= 0.0:
        raise ZeroMu("bound undefined for mu = 0")
    p = cov.target_p
    target = math.fsum(q * f(y) * (f(y) / mu) ** p for y, q in law.atoms)
    return exact_covering_average(proc, f, cov, cap=cap) - target


__all__ = [
    "CheckResult",
    "ExactLaw",
    "Moments",
    "SupportTooLarge",
    "exact_attacked_expectation",
    "exact_covering_average",
    "exact_law",
    "moments",
    "rejsam_second_moment_bound_gap",
    "statistical_distance",
    "tampered_conditional",
    "tampered_law",
    "truncated_acceptance_law",
    "verify_covering_identity",
    "verify_likelihood_ratio",
]
