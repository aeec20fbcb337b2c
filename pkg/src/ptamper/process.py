"""Finite discrete random processes exposed block by block.

Two flavors are supported. :class:`ExplicitProcess` stores the whole
probability tree keyed by prefix, which makes every conditional query exact.
:class:`GenerativeProcess` only knows how to sample the next block (and may
optionally know the exact conditional law).

Prefixes are plain tuples of symbols; blocks are opaque hashable tokens.
Positions are 0-based throughout the package.
"""

from __future__ import annotations

import bisect
import functools
import itertools
import math
import random
from collections.abc import Callable, Hashable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from types import MappingProxyType
from typing import Any, Optional

from .errors import (
    InvalidPrefix,
    ObjectiveRangeError,
    OutOfRange,
    SupportTooLarge,
    UnsupportedFlavor,
)

Symbol = Hashable
Prefix = tuple
Distribution = dict  # symbol -> probability

NORMALIZATION_TOL = 1e-12
DEFAULT_SUPPORT_CAP = 1 << 20


def _freeze(sym: Any) -> Symbol:
    # JSON arrays arrive as lists; symbols must be hashable
    if isinstance(sym, list):
        return tuple(_freeze(s) for s in sym)
    return sym


@dataclass(frozen=True, eq=False)
class ObjectiveFunction:
    """A bounded objective ``f: Supp(X) -> [0, 1]`` over full sequences.

    Instances hash by identity so they can key memo tables.
    """

    name: str
    fn: Callable[[Prefix], float]
    boolean: bool = False

    def __call__(self, seq: Sequence[Symbol]) -> float:
        return float(self.fn(tuple(seq)))


def _as_number(x: Any) -> float:
    if isinstance(x, tuple):
        # labeled examples (instance, label): use the label
        return float(x[-1])
    return float(x)


def make_objective(name: str, table: Optional[Mapping] = None) -> ObjectiveFunction:
    """Build a registered objective.

    Registered names: ``and``, ``or``, ``parity``, ``mean``, ``threshold:t``
    (1 iff the mean block value is at least ``t``), ``const:c`` and ``table``
    (explicit map from full sequences to values).
    """
    if name == "and":
        return ObjectiveFunction("and", lambda s: float(all(_as_number(x) == 1 for x in s)), True)
    if name == "or":
        return ObjectiveFunction("or", lambda s: float(any(_as_number(x) == 1 for x in s)), True)
    if name == "parity":
        return ObjectiveFunction("parity", lambda s: float(int(sum(_as_number(x) for x in s)) % 2), True)
    if name == "mean":
        return ObjectiveFunction("mean", lambda s: sum(_as_number(x) for x in s) / len(s))
    if name.startswith("threshold:"):
        t = float(name.split(":", 1)[1])
        return ObjectiveFunction(
            name, lambda s: float(sum(_as_number(x) for x in s) / len(s) >= t), True
        )
    if name.startswith("const:"):
        c = float(name.split(":", 1)[1])
        if not 0.0 <= c <= 1.0:
            raise OutOfRange(f"constant objective {c} outside [0, 1]")
        return ObjectiveFunction(name, lambda s: c, c in (0.0, 1.0))
    if name == "table":
        if table is None:
            raise ValueError("objective 'table' needs an explicit value map")
        values = {_freeze(k): float(v) for k, v in _table_items(table)}
        boolean = all(v in (0.0, 1.0) for v in values.values())
        return ObjectiveFunction("table", lambda s: values[s], boolean)
    raise ValueError(f"unknown objective {name!r}")


def _table_items(table: Any) -> Iterator[tuple[Any, float]]:
    if isinstance(table, Mapping):
        yield from table.items()
    else:
        for seq, v in table:
            yield _freeze(seq), v


class RandomProcess:
    """Common interface of both process flavors."""

    n: int
    alphabet: tuple[tuple[Symbol, ...], ...]
    exact: bool = False

    def is_valid_prefix(self, pfx: Sequence[Symbol]) -> bool:
        raise NotImplementedError

    def conditional_next(self, pfx: Sequence[Symbol]) -> Distribution:
        raise NotImplementedError

    def sample_next(self, pfx: Prefix, rng: random.Random) -> Symbol:
        raise NotImplementedError

    def sample_continuation(self, pfx: Sequence[Symbol], rng: random.Random) -> Prefix:
        """Extend ``pfx`` to a full sequence with the honest conditional law."""
        seq = tuple(pfx)
        if not self.is_valid_prefix(seq):
            raise InvalidPrefix(f"{seq!r} is not a valid prefix")
        while len(seq) < self.n:
            seq = seq + (self.sample_next(seq, rng),)
        return seq

    def partial_expectation(
        self,
        f: ObjectiveFunction,
        pfx: Sequence[Symbol] = (),
        *,
        trials: Optional[int] = None,
        rng: Optional[random.Random] = None,
    ) -> float:
        """``E[f(X) | X starts with pfx]``.

        Exact on processes that expose exact conditionals unless ``trials`` is
        given, in which case a Monte Carlo estimate over ``trials`` honest
        continuations is returned.
        """
        pfx = tuple(pfx)
        if not self.is_valid_prefix(pfx):
            raise InvalidPrefix(f"{pfx!r} is not a valid prefix")
        if len(pfx) == self.n:
            return f(pfx)
        if trials is None:
            if not self.exact:
                raise UnsupportedFlavor("exact partial expectation needs exact conditionals")
            return _exact_partial(self, f, pfx)
        if trials < 1:
            raise OutOfRange("trials must be >= 1")
        rng = rng if rng is not None else random.Random(0)
        total = 0.0
        for _ in range(trials):
            total += f(self.sample_continuation(pfx, rng))
        return total / trials


def _exact_partial(proc: RandomProcess, f: ObjectiveFunction, pfx: Prefix) -> float:
    if isinstance(proc, ExplicitProcess):
        return fhat_table(proc, f)[pfx]

    @functools.lru_cache(maxsize=None)
    def rec(p: Prefix) -> float:
        if len(p) == proc.n:
            return f(p)
        return sum(q * rec(p + (s,)) for s, q in proc.conditional_next(p).items() if q > 0)

    return rec(pfx)


class ExplicitProcess(RandomProcess):
    """A process stored as a probability tree.

    ``tree`` maps every non-terminal valid prefix to the positive-probability
    part of its next-block distribution.
    """

    exact = True

    def __init__(
        self,
        n: int,
        alphabet: Sequence[Sequence[Symbol]],
        tree: Mapping[Prefix, Mapping[Symbol, float]],
    ):
        if n < 1:
            raise OutOfRange("n must be >= 1")
        if len(alphabet) != n:
            raise ValueError(f"alphabet has {len(alphabet)} positions, expected {n}")
        self.n = n
        self.alphabet = tuple(tuple(_freeze(s) for s in a) for a in alphabet)
        self._tree: dict[Prefix, Distribution] = {}
        self._tables: dict[Prefix, tuple[tuple[Symbol, ...], tuple[float, ...]]] = {}
        self._build(tree)

    def _build(self, tree: Mapping[Prefix, Mapping[Symbol, float]]) -> None:
        stack: list[Prefix] = [()]
        while stack:
            pfx = stack.pop()
            if pfx not in tree:
                raise ValueError(f"probability tree is missing valid prefix {pfx!r}")
            raw = tree[pfx]
            i = len(pfx)
            dist: Distribution = {}
            for s, q in raw.items():
                s = _freeze(s)
                q = float(q)
                if q < 0:
                    raise ValueError(f"negative probability at {pfx!r}")
                if s not in self.alphabet[i]:
                    raise ValueError(f"symbol {s!r} not in alphabet of position {i}")
                if q > 0:
                    dist[s] = q
            total = math.fsum(dist.values())
            if abs(total - 1.0) > NORMALIZATION_TOL:
                raise ValueError(f"conditional at {pfx!r} sums to {total!r}")
            # canonical alphabet order keeps enumeration deterministic
            order = {s: j for j, s in enumerate(self.alphabet[i])}
            dist = dict(sorted(dist.items(), key=lambda kv: order[kv[0]]))
            self._tree[pfx] = dist
            syms = tuple(dist)
            cum = tuple(itertools.accumulate(dist.values()))
            self._tables[pfx] = (syms, cum)
            if i + 1 < self.n:
                stack.extend(pfx + (s,) for s in reversed(syms))

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_conditional(
        cls,
        n: int,
        alphabet: Sequence[Sequence[Symbol]],
        cond: Callable[[Prefix], Mapping[Symbol, float]],
        support_cap: int = DEFAULT_SUPPORT_CAP,
    ) -> "ExplicitProcess":
        """Build the tree by querying ``cond(prefix)`` on every reachable prefix."""
        tree: dict[Prefix, Mapping[Symbol, float]] = {}
        frontier: list[Prefix] = [()]
        nodes = 0
        while frontier:
            pfx = frontier.pop()
            d = {_freeze(s): q for s, q in cond(pfx).items()}
            tree[pfx] = d
            nodes += 1
            if nodes > support_cap:
                raise SupportTooLarge(f"probability tree exceeds {support_cap} nodes")
            if len(pfx) + 1 < n:
                frontier.extend(pfx + (s,) for s, q in d.items() if q > 0)
        return cls(n, alphabet, tree)

    @classmethod
    def product(cls, dists: Sequence[Mapping[Symbol, float]]) -> "ExplicitProcess":
        """Independent blocks; block ``i`` has law ``dists[i]``."""
        dists = [{_freeze(s): float(q) for s, q in d.items()} for d in dists]
        alphabet = [list(d) for d in dists]
        return cls.from_conditional(len(dists), alphabet, lambda pfx: dists[len(pfx)])

    @classmethod
    def iid(cls, n: int, dist: Mapping[Symbol, float]) -> "ExplicitProcess":
        return cls.product([dist] * n)

    @classmethod
    def bernoulli_iid(cls, n: int, p1: float) -> "ExplicitProcess":
        if not 0.0 <= p1 <= 1.0:
            raise OutOfRange(f"Bernoulli parameter {p1} outside [0, 1]")
        return cls.iid(n, {0: 1.0 - p1, 1: p1})

    @classmethod
    def markov(
        cls,
        n: int,
        states: Sequence[Symbol],
        initial: Mapping[Symbol, float],
        transition: Mapping[Symbol, Mapping[Symbol, float]],
    ) -> "ExplicitProcess":
        states = [_freeze(s) for s in states]
        initial = {_freeze(s): q for s, q in initial.items()}
        transition = {_freeze(a): {_freeze(b): q for b, q in row.items()} for a, row in transition.items()}
        return cls.from_conditional(
            n, [states] * n, lambda pfx: initial if not pfx else transition[pfx[-1]]
        )

    @classmethod
    def from_joint(cls, table: Mapping[Prefix, float] | Sequence) -> "ExplicitProcess":
        """Build from a flat joint table ``{full sequence: probability}``."""
        joint = {_freeze(seq): float(q) for seq, q in _table_items(table)}
        if not joint:
            raise ValueError("empty joint table")
        lengths = {len(seq) for seq in joint}
        if len(lengths) != 1:
            raise ValueError("joint table mixes sequence lengths")
        n = lengths.pop()
        total = math.fsum(joint.values())
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"joint table sums to {total!r}")
        mass: dict[Prefix, float] = {}
        for seq, q in joint.items():
            for i in range(n + 1):
                mass[seq[:i]] = mass.get(seq[:i], 0.0) + q
        tree: dict[Prefix, dict[Symbol, float]] = {}
        for seq, q in joint.items():
            if q <= 0:
                continue
            for i in range(n):
                pfx = seq[:i]
                tree.setdefault(pfx, {})[seq[i]] = mass[seq[: i + 1]] / mass[pfx]
        alphabet = [sorted({seq[i] for seq in joint}, key=repr) for i in range(n)]
        return cls(n, alphabet, tree)

    # -- queries ----------------------------------------------------------

    def is_valid_prefix(self, pfx: Sequence[Symbol]) -> bool:
        pfx = tuple(pfx)
        i = len(pfx)
        if i > self.n:
            return False
        if i == 0:
            return True
        parent = self._tree.get(pfx[:-1])
        return parent is not None and pfx[-1] in parent

    def conditional_next(self, pfx: Sequence[Symbol]) -> Distribution:
        pfx = tuple(pfx)
        if len(pfx) >= self.n or pfx not in self._tree:
            raise InvalidPrefix(f"{pfx!r} is not a non-terminal valid prefix")
        return dict(self._tree[pfx])

    def sample_next(self, pfx: Prefix, rng: random.Random) -> Symbol:
        try:
            syms, cum = self._tables[pfx]
        except KeyError:
            raise InvalidPrefix(f"{pfx!r} is not a non-terminal valid prefix") from None
        j = bisect.bisect_right(cum, rng.random() * cum[-1])
        return syms[min(j, len(syms) - 1)]

    @property
    def tree(self) -> Mapping[Prefix, Distribution]:
        """Read-only view of the probability tree."""
        return MappingProxyType(self._tree)

    def prefixes(self) -> Iterator[Prefix]:
        """Every non-terminal valid prefix in depth-first canonical order."""
        return iter(self._tree)

    def support(self) -> Iterator[tuple[Prefix, float]]:
        """Yield ``(sequence, probability)`` for every support sequence."""
        stack: list[tuple[Prefix, float]] = [((), 1.0)]
        while stack:
            pfx, q = stack.pop()
            if len(pfx) == self.n:
                yield pfx, q
                continue
            for s, r in reversed(list(self._tree[pfx].items())):
                stack.append((pfx + (s,), q * r))

    def support_size(self) -> int:
        return sum(len(d) for p, d in self._tree.items() if len(p) == self.n - 1)

    def prefix_probability(self, pfx: Sequence[Symbol]) -> float:
        pfx = tuple(pfx)
        if not self.is_valid_prefix(pfx):
            return 0.0
        q = 1.0
        for i in range(len(pfx)):
            q *= self._tree[pfx[:i]][pfx[i]]
        return q

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "alphabet": [list(a) for a in self.alphabet],
            "kind": "explicit",
            "tree": [[list(p), [[s, q] for s, q in d.items()]] for p, d in self._tree.items()],
        }

    def __repr__(self) -> str:
        return f"ExplicitProcess(n={self.n}, prefixes={len(self._tree)})"


class GenerativeProcess(RandomProcess):
    """A process known only through an online sampler.

    ``sampler(prefix, rng)`` must return the next block. ``conditional`` is
    an optional exact next-block law; when present, exact queries work.
    """

    def __init__(
        self,
        n: int,
        alphabet: Sequence[Sequence[Symbol]],
        sampler: Callable[[Prefix, random.Random], Symbol],
        conditional: Optional[Callable[[Prefix], Mapping[Symbol, float]]] = None,
    ):
        if n < 1:
            raise OutOfRange("n must be >= 1")
        if len(alphabet) != n:
            raise ValueError(f"alphabet has {len(alphabet)} positions, expected {n}")
        self.n = n
        self.alphabet = tuple(tuple(_freeze(s) for s in a) for a in alphabet)
        self._sampler = sampler
        self._conditional = conditional
        self.exact = conditional is not None

    def is_valid_prefix(self, pfx: Sequence[Symbol]) -> bool:
        pfx = tuple(pfx)
        if len(pfx) > self.n:
            return False
        if self._conditional is None:
            # relative to the declared alphabet only
            return all(s in self.alphabet[i] for i, s in enumerate(pfx))
        for i in range(len(pfx)):
            if self._conditional(pfx[:i]).get(pfx[i], 0.0) <= 0:
                return False
        return True

    def conditional_next(self, pfx: Sequence[Symbol]) -> Distribution:
        if self._conditional is None:
            raise UnsupportedFlavor("generative process has no exact conditional")
        pfx = tuple(pfx)
        if len(pfx) >= self.n or not self.is_valid_prefix(pfx):
            raise InvalidPrefix(f"{pfx!r} is not a non-terminal valid prefix")
        return {s: q for s, q in self._conditional(pfx).items() if q > 0}

    def sample_next(self, pfx: Prefix, rng: random.Random) -> Symbol:
        s = _freeze(self._sampler(pfx, rng))
        if s not in self.alphabet[len(pfx)]:
            raise InvalidPrefix(f"sampler emitted undeclared symbol {s!r} at position {len(pfx)}")
        return s

    def __repr__(self) -> str:
        return f"GenerativeProcess(n={self.n}, exact={self.exact})"


@functools.lru_cache(maxsize=128)
def fhat_table(proc: ExplicitProcess, f: ObjectiveFunction) -> dict[Prefix, float]:
    """Partial expectations of ``f`` on every valid prefix, including full sequences."""
    table: dict[Prefix, float] = {}
    for seq, _ in proc.support():
        v = f(seq)
        if not 0.0 <= v <= 1.0:
            raise ObjectiveRangeError(f"{f.name}({seq!r}) = {v} outside [0, 1]")
        table[seq] = v
    # longest prefixes first so children are ready
    for pfx in sorted(proc.prefixes(), key=len, reverse=True):
        dist = proc.tree[pfx]
        table[pfx] = math.fsum(q * table[pfx + (s,)] for s, q in dist.items())
    return table


def check_support_cap(proc: ExplicitProcess, cap: int) -> None:
    size = proc.support_size()
    if size > cap:
        raise SupportTooLarge(f"support has {size} sequences, cap is {cap}")


def process_from_json(obj: Mapping) -> RandomProcess:
    """Parse a process definition.

    Kinds: ``explicit`` (``tree`` list of ``[prefix, [[symbol, prob], ...]]``
    or ``joint`` list of ``[sequence, prob]``), ``bernoulli_iid`` (``p``),
    ``product`` (``dists``: per-position ``[[symbol, prob], ...]``) and
    ``markov`` (``initial``, ``transition``).
    """
    kind = obj.get("kind", "explicit")
    n = int(obj["n"]) if "n" in obj else None
    if kind == "bernoulli_iid":
        return ExplicitProcess.bernoulli_iid(n, float(obj["p"]))
    if kind == "product":
        return ExplicitProcess.product([{_freeze(s): q for s, q in d} for d in obj["dists"]])
    if kind == "markov":
        alphabet = obj.get("alphabet")
        states = alphabet[0] if alphabet else obj["states"]
        initial = {_freeze(s): q for s, q in obj["initial"]}
        transition = {_freeze(a): {_freeze(b): q for b, q in row} for a, row in obj["transition"]}
        return ExplicitProcess.markov(n, states, initial, transition)
    if kind == "explicit":
        if "joint" in obj:
            return ExplicitProcess.from_joint(obj["joint"])
        tree = {
            tuple(_freeze(s) for s in p): {_freeze(s): q for s, q in d} for p, d in obj["tree"]
        }
        return ExplicitProcess(n, obj["alphabet"], tree)
    raise ValueError(f"unknown process kind {kind!r}")


def objective_from_json(obj: Any) -> ObjectiveFunction:
    if isinstance(obj, str):
        return make_objective(obj)
    return make_objective(obj["name"], obj.get("table"))
