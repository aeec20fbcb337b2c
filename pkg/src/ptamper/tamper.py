"""Rejection-sampling tampering strategies and tampered executions.

``IdealRejSam`` draws the tampered block from its exact induced law
``Pr[y | pfx] = Pr[x = y | pfx] * fhat(pfx + y) / fhat(pfx)`` and therefore
needs an explicit process. ``IterRejSam`` only needs an online sampler and
the objective: it tries up to ``k`` honest continuations, accepting the
next block of a continuation with probability ``f(continuation)``, and falls
back to a fresh honest block otherwise.
"""

from __future__ import annotations

import bisect
import functools
import itertools
import json
import math
import random
from dataclasses import dataclass, field
from typing import Optional

from .covering import TamperPlan
from .errors import (
    InvalidPrefix,
    OutOfRange,
    PlausibilityViolation,
    UnsupportedFlavor,
    ZeroMu,
    ZeroPartialExpectation,
)
from .process import Distribution, ExplicitProcess, ObjectiveFunction, Prefix, RandomProcess, Symbol, fhat_table

IDEAL = "ideal"
ITERATED = "iter"


@dataclass(frozen=True)
class TamperStrategy:
    kind: str = IDEAL
    k: Optional[int] = None

    def __post_init__(self):
        if self.kind not in (IDEAL, ITERATED):
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.kind == ITERATED and (self.k is None or self.k < 1):
            raise OutOfRange("iterated rejection sampling needs a budget k >= 1")

    @classmethod
    def ideal(cls) -> "TamperStrategy":
        return cls(IDEAL)

    @classmethod
    def iterated(cls, k: int) -> "TamperStrategy":
        return cls(ITERATED, int(k))

    def __str__(self) -> str:
        return "IdealRejSam" if self.kind == IDEAL else f"IterRejSam(k={self.k})"


@dataclass(frozen=True)
class BlockProvenance:
    tampered: bool = False
    iterations: int = 0
    fell_back: bool = False
    zero_branch: bool = False  # ideal sampler hit fhat == 0 and used the honest law

    def to_json(self):
        if not self.tampered:
            return "honest"
        return {"iterations": self.iterations, "fell_back": self.fell_back, "zero_branch": self.zero_branch}


HONEST = BlockProvenance()


@dataclass(frozen=True)
class TamperedExecution:
    sequence: Prefix
    plan: TamperPlan
    provenance: tuple[BlockProvenance, ...]
    objective_value: float

    @property
    def max_iterations(self) -> int:
        return max((b.iterations for b in self.provenance), default=0)

    def to_json(self) -> str:
        return json.dumps(
            {
                "sequence": list(self.sequence),
                "plan": sorted(self.plan.tamper_set),
                "provenance": [b.to_json() for b in self.provenance],
                "objective_value": self.objective_value,
            }
        )


def rejsam_exact_conditional(proc: RandomProcess, f: ObjectiveFunction, pfx) -> Distribution:
    """Exact next-block law of the ideal rejection sampler at ``pfx``.

    >>> from ptamper.process import ExplicitProcess, make_objective
    >>> rejsam_exact_conditional(ExplicitProcess.bernoulli_iid(2, 0.5), make_objective("and"), ())
    {0: 0.0, 1: 1.0}
    """
    if not isinstance(proc, ExplicitProcess):
        raise UnsupportedFlavor("the ideal sampler needs an explicit process")
    pfx = tuple(pfx)
    honest = proc.conditional_next(pfx)
    table = fhat_table(proc, f)
    base = table[pfx]
    if base <= 0.0:
        raise ZeroPartialExpectation(f"fhat({pfx!r}) = 0")
    return {s: q * table[pfx + (s,)] / base for s, q in honest.items()}


def rejsam_k_sample(
    proc: RandomProcess, f: ObjectiveFunction, pfx, k: int, rng: random.Random
) -> tuple[Symbol, int, bool]:
    """One block of k-rejection sampling.

    Returns ``(symbol, iterations_used, fell_back)``. Each iteration draws an
    honest continuation first and then one uniform for the acceptance test.
    """
    if k < 1:
        raise OutOfRange("k must be >= 1")
    pfx = tuple(pfx)
    if len(pfx) >= proc.n or not proc.is_valid_prefix(pfx):
        raise InvalidPrefix(f"{pfx!r} is not a non-terminal valid prefix")
    i = len(pfx)
    if isinstance(proc, ExplicitProcess) and fhat_table(proc, f)[pfx] <= 0.0:
        # every iteration rejects with certainty; skip straight to the fallback
        return proc.sample_next(pfx, rng), k, True
    for it in range(1, k + 1):
        cont = proc.sample_continuation(pfx, rng)
        if rng.random() < f(cont):
            return cont[i], it, False
    return proc.sample_next(pfx, rng), k, True


def required_iterations(n: int, eps: float, mu: float) -> int:
    """Budget ``ceil(16 ln(2n/eps) / (eps^2 mu^2))`` for k-rejection sampling."""
    if n < 1:
        raise OutOfRange("n must be >= 1")
    if not 0.0 < eps <= 1.0:
        raise OutOfRange(f"eps={eps} outside (0, 1]")
    if mu <= 0.0:
        raise ZeroMu("budget diverges for mu = 0")
    if mu > 1.0:
        raise OutOfRange(f"mu={mu} outside (0, 1]")
    return math.ceil(16.0 * math.log(2.0 * n / eps) / (eps**2 * mu**2))


@functools.lru_cache(maxsize=64)
def _ideal_sampler(proc: ExplicitProcess, f: ObjectiveFunction):
    table = fhat_table(proc, f)
    cache: dict[Prefix, tuple] = {}

    def draw(pfx: Prefix, rng: random.Random) -> tuple[Symbol, bool]:
        entry = cache.get(pfx)
        if entry is None:
            if table[pfx] <= 0.0:
                entry = (None, None, True)
            else:
                dist = rejsam_exact_conditional(proc, f, pfx)
                syms = tuple(s for s, q in dist.items() if q > 0)
                cum = tuple(itertools.accumulate(dist[s] for s in syms))
                entry = (syms, cum, False)
            cache[pfx] = entry
        syms, cum, zero = entry
        if zero:
            return proc.sample_next(pfx, rng), True
        j = bisect.bisect_right(cum, rng.random() * cum[-1])
        return syms[min(j, len(syms) - 1)], False

    return draw


def run_tampered_execution(
    proc: RandomProcess,
    f: ObjectiveFunction,
    strategy: TamperStrategy,
    plan: TamperPlan,
    rng: random.Random,
) -> TamperedExecution:
    """Sample ``Y^S``: tampered blocks at ``plan.tamper_set``, honest elsewhere.

    At prefixes where the partial expectation is 0 the ideal sampler uses the
    honest conditional instead of looping forever.
    """
    if any(not 0 <= i < proc.n for i in plan.tamper_set):
        raise OutOfRange(f"plan {sorted(plan.tamper_set)} not inside [0, {proc.n})")
    if strategy.kind == IDEAL:
        if not isinstance(proc, ExplicitProcess):
            raise UnsupportedFlavor("the ideal sampler needs an explicit process")
        ideal = _ideal_sampler(proc, f)
    seq: Prefix = ()
    prov = []
    for i in range(proc.n):
        if i not in plan.tamper_set:
            seq = seq + (proc.sample_next(seq, rng),)
            prov.append(HONEST)
        elif strategy.kind == IDEAL:
            s, zero = ideal(seq, rng)
            seq = seq + (s,)
            prov.append(BlockProvenance(True, 1, False, zero))
        else:
            s, it, fb = rejsam_k_sample(proc, f, seq, strategy.k, rng)
            seq = seq + (s,)
            prov.append(BlockProvenance(True, it, fb))
    if not proc.is_valid_prefix(seq):
        raise PlausibilityViolation(f"tampered sequence {seq!r} left the honest support")
    return TamperedExecution(seq, plan, tuple(prov), f(seq))
