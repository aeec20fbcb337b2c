"""Distributions over tamper sets with a fixed per-index marginal.

Three kinds are supported:

* ``iid``: every index joins independently with probability ``p``.
* ``party_bion``: pick ``k`` of ``m`` parties uniformly, then each round owned
  by a picked party joins independently with probability ``p``. Fixing the
  party set (:func:`condition_on_parties`) gives the per-coalition variant.
* ``explicit``: a finite list of weighted subsets.

Index sets are frozensets of 0-based round indices.
"""

from __future__ import annotations

import itertools
import math
import random
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Optional

from .errors import EmptySchedule, IndexOutOfRange, OutOfRange, SupportTooLarge

WEIGHT_TOL = 1e-12
DEFAULT_COVERING_CAP = 1 << 20


@dataclass(frozen=True)
class CoveringDistribution:
    n: int
    kind: str
    p: float
    m: int = 0
    k: int = 0
    owner_map: tuple[int, ...] = ()
    parties: Optional[frozenset[int]] = None
    atoms: tuple[tuple[frozenset[int], float], ...] = ()

    @property
    def target_p(self) -> float:
        """The per-index inclusion probability this covering guarantees."""
        if self.kind == "iid":
            return self.p
        if self.kind == "party_bion":
            if self.parties is not None:
                raise ValueError("a fixed-party covering has no uniform marginal")
            return self.p * self.k / self.m
        marg = {self.marginal(i) for i in range(self.n)}
        if max(marg) - min(marg) > WEIGHT_TOL:
            raise ValueError("explicit covering is not uniform across indices")
        return marg.pop()

    def rounds_of(self, parties: Iterable[int]) -> frozenset[int]:
        ps = set(parties)
        return frozenset(j for j, w in enumerate(self.owner_map) if w in ps)

    def marginal(self, i: int) -> float:
        if not 0 <= i < self.n:
            raise IndexOutOfRange(f"index {i} outside [0, {self.n})")
        if self.kind == "iid":
            return self.p
        if self.kind == "party_bion":
            if self.parties is not None:
                return self.p if self.owner_map[i] in self.parties else 0.0
            return self.p * self.k / self.m
        return math.fsum(w for s, w in self.atoms if i in s)

    def sample(self, rng: random.Random) -> "TamperPlan":
        if self.kind == "iid":
            s = frozenset(i for i in range(self.n) if rng.random() < self.p)
            return TamperPlan(s, self)
        if self.kind == "party_bion":
            if self.parties is not None:
                parties = self.parties
            else:
                parties = frozenset(rng.sample(range(self.m), self.k))
            rounds = sorted(self.rounds_of(parties))
            s = frozenset(j for j in rounds if rng.random() < self.p)
            return TamperPlan(s, self, parties)
        u = rng.random()
        acc = 0.0
        for s, w in self.atoms:
            acc += w
            if u < acc:
                return TamperPlan(s, self)
        return TamperPlan(self.atoms[-1][0], self)

    def enumerate_support(self, cap: int = DEFAULT_COVERING_CAP) -> list[tuple[frozenset[int], float]]:
        """All subsets with positive weight, merged and in canonical order.

        Canonical order sorts subsets by their sorted index lists.
        """
        if self.kind == "iid":
            if self.p in (0.0, 1.0):
                full = frozenset(range(self.n)) if self.p == 1.0 else frozenset()
                return [(full, 1.0)]
            if 2**self.n > cap:
                raise SupportTooLarge(f"2^{self.n} subsets exceed cap {cap}")
            return _canonical(_bion(range(self.n), self.p))
        if self.kind == "party_bion":
            if self.parties is not None:
                groups = [self.parties]
            else:
                groups = [frozenset(c) for c in itertools.combinations(range(self.m), self.k)]
            size = sum(2 ** len(self.rounds_of(c)) for c in groups)
            if size > cap:
                raise SupportTooLarge(f"{size} weighted atoms exceed cap {cap}")
            merged: list[tuple[frozenset[int], float]] = []
            for c in groups:
                merged.extend((s, w / len(groups)) for s, w in _bion(sorted(self.rounds_of(c)), self.p))
            return _canonical(merged)
        if len(self.atoms) > cap:
            raise SupportTooLarge(f"{len(self.atoms)} atoms exceed cap {cap}")
        return _canonical(self.atoms)

    def to_json(self) -> dict:
        if self.kind == "iid":
            return {"kind": "iid", "n": self.n, "p": self.p}
        if self.kind == "party_bion":
            out = {"kind": "party_bion", "owner_map": list(self.owner_map), "m": self.m, "k": self.k, "p": self.p}
            if self.parties is not None:
                out["parties"] = sorted(self.parties)
            return out
        return {"kind": "explicit", "n": self.n, "atoms": [[sorted(s), w] for s, w in self.atoms]}


@dataclass(frozen=True)
class TamperPlan:
    tamper_set: frozenset[int]
    source: Optional[CoveringDistribution] = field(default=None, repr=False, compare=False)
    parties: Optional[frozenset[int]] = None


def _bion(items: Iterable[int], p: float) -> Iterable[tuple[frozenset[int], float]]:
    items = list(items)
    if p == 0.0:
        yield frozenset(), 1.0
        return
    if p == 1.0:
        yield frozenset(items), 1.0
        return
    for r in range(len(items) + 1):
        w = p**r * (1.0 - p) ** (len(items) - r)
        for sub in itertools.combinations(items, r):
            yield frozenset(sub), w


def _canonical(atoms: Iterable[tuple[frozenset[int], float]]) -> list[tuple[frozenset[int], float]]:
    merged: dict[tuple[int, ...], list[float]] = {}
    for s, w in atoms:
        if w > 0:
            merged.setdefault(tuple(sorted(s)), []).append(w)
    return [(frozenset(key), math.fsum(ws)) for key, ws in sorted(merged.items())]


def _check_p(p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise OutOfRange(f"probability {p} outside [0, 1]")
    return p


def make_iid_covering(n: int, p: float) -> CoveringDistribution:
    if n < 1:
        raise OutOfRange("n must be >= 1")
    return CoveringDistribution(n=n, kind="iid", p=_check_p(p))


def make_party_covering(owner_map: Sequence[int], k: int, p: float, m: Optional[int] = None) -> CoveringDistribution:
    """Random-coalition covering with marginal ``p * k / m``.

    ``owner_map[j]`` is the party that sends round ``j``. ``m`` defaults to
    the number of distinct owners.
    """
    if len(owner_map) == 0:
        raise EmptySchedule("owner map has no rounds")
    owner_map = tuple(int(w) for w in owner_map)
    if m is None:
        m = max(owner_map) + 1
    if min(owner_map) < 0 or max(owner_map) >= m:
        raise OutOfRange(f"owner map references parties outside [0, {m})")
    if not 1 <= k <= m:
        raise OutOfRange(f"k={k} must satisfy 1 <= k <= m={m}")
    return CoveringDistribution(n=len(owner_map), kind="party_bion", p=_check_p(p), m=m, k=k, owner_map=owner_map)


def condition_on_parties(cov: CoveringDistribution, parties: Iterable[int]) -> CoveringDistribution:
    """Fix the corrupted coalition of a party covering."""
    if cov.kind != "party_bion":
        raise ValueError("only party coverings can be conditioned on a coalition")
    parties = frozenset(parties)
    if len(parties) != cov.k or not all(0 <= c < cov.m for c in parties):
        raise OutOfRange(f"coalition {sorted(parties)} is not a {cov.k}-subset of [0, {cov.m})")
    return CoveringDistribution(
        n=cov.n, kind="party_bion", p=cov.p, m=cov.m, k=cov.k, owner_map=cov.owner_map, parties=parties
    )


def make_explicit_covering(n: int, atoms: Iterable[tuple[Iterable[int], float]]) -> CoveringDistribution:
    clean = []
    for s, w in atoms:
        s = frozenset(int(i) for i in s)
        if any(not 0 <= i < n for i in s):
            raise IndexOutOfRange(f"subset {sorted(s)} not inside [0, {n})")
        if w < 0:
            raise OutOfRange("negative subset weight")
        clean.append((s, float(w)))
    total = math.fsum(w for _, w in clean)
    if abs(total - 1.0) > WEIGHT_TOL:
        raise ValueError(f"subset weights sum to {total!r}")
    return CoveringDistribution(n=n, kind="explicit", p=float("nan"), atoms=tuple(clean))


def covering_from_json(obj: Mapping, n: Optional[int] = None) -> CoveringDistribution:
    kind = obj["kind"]
    if kind == "iid":
        return make_iid_covering(int(obj.get("n", n)), obj["p"])
    if kind == "party_bion":
        cov = make_party_covering(obj["owner_map"], int(obj["k"]), obj["p"], obj.get("m"))
        if "parties" in obj:
            cov = condition_on_parties(cov, obj["parties"])
        return cov
    if kind == "explicit":
        return make_explicit_covering(int(obj.get("n", n)), obj["atoms"])
    raise ValueError(f"unknown covering kind {kind!r}")


@dataclass
class VerificationReport:
    trials: int
    rows: list[dict]

    @property
    def flagged(self) -> list[int]:
        return [r["index"] for r in self.rows if r["flagged"]]

    @property
    def passed(self) -> bool:
        return not self.flagged

    def to_json(self) -> dict:
        return {"trials": self.trials, "passed": self.passed, "rows": self.rows}


def verify_covering(cov: CoveringDistribution, trials: int, rng: random.Random) -> VerificationReport:
    """Compare empirical inclusion frequencies against the analytic marginals.

    An index is flagged when ``|empirical - analytic| > 4 * sqrt(p(1-p)/trials)``.
    """
    if trials < 1:
        raise OutOfRange("trials must be >= 1")
    counts = [0] * cov.n
    for _ in range(trials):
        for i in cov.sample(rng).tamper_set:
            counts[i] += 1
    rows = []
    for i in range(cov.n):
        analytic = cov.marginal(i)
        emp = counts[i] / trials
        sd = math.sqrt(analytic * (1.0 - analytic) / trials)
        diff = emp - analytic
        z = diff / sd if sd > 0 else (0.0 if diff == 0 else math.copysign(math.inf, diff))
        rows.append(
            {"index": i, "empirical": emp, "analytic": analytic, "z": z, "flagged": abs(diff) > 4 * sd}
        )
    return VerificationReport(trials, rows)
