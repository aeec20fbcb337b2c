"""Seeded random instance generators for property checks and the suite."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .covering import CoveringDistribution, make_iid_covering, make_party_covering
from .process import ExplicitProcess, ObjectiveFunction, fhat_table, make_objective
from .seeding import derive_seed


@dataclass(frozen=True)
class Instance:
    label: str
    proc: ExplicitProcess
    f: ObjectiveFunction
    owner_map: tuple[int, ...]
    m: int
    k: int

    @property
    def mu(self) -> float:
        return fhat_table(self.proc, self.f)[()]

    def coverings(self, p: float) -> list[CoveringDistribution]:
        """IID covering and random-coalition party covering at inner probability ``p``."""
        return [make_iid_covering(self.proc.n, p), make_party_covering(self.owner_map, self.k, p, self.m)]


def random_process(rng: random.Random, n: int, max_alphabet: int = 3, zero_prob: float = 0.15) -> ExplicitProcess:
    sizes = [rng.randint(2, max_alphabet) for _ in range(n)]
    alphabet = [list(range(a)) for a in sizes]

    def cond(pfx):
        syms = alphabet[len(pfx)]
        w = [0.0 if rng.random() < zero_prob else rng.random() + 1e-3 for _ in syms]
        if not any(w):
            w[rng.randrange(len(w))] = 1.0
        total = sum(w)
        probs = [x / total for x in w]
        # exact normalization keeps the tree validator happy
        probs[-1] = 1.0 - sum(probs[:-1])
        if probs[-1] < 0:
            probs[-1] = 0.0
        return dict(zip(syms, probs))

    return ExplicitProcess.from_conditional(n, alphabet, cond)


def random_objective(rng: random.Random, proc: ExplicitProcess, boolean: bool) -> ObjectiveFunction:
    table = {}
    for seq, _ in proc.support():
        if boolean:
            table[seq] = float(rng.random() < 0.45)
        else:
            table[seq] = 0.0 if rng.random() < 0.1 else rng.random()
    return make_objective("table", table)


def random_instance(seed: int, index: int, max_n: int = 5, min_mu: float = 0.05) -> Instance:
    """Instance ``index`` of the battery drawn from ``seed``; rejects ``mu <= min_mu``."""
    attempt = 0
    while True:
        rng = random.Random(derive_seed(seed, ["instance", index, attempt]))
        n = rng.randint(2, max_n)
        proc = random_process(rng, n)
        boolean = index % 2 == 0
        f = random_objective(rng, proc, boolean)
        if fhat_table(proc, f)[()] > min_mu:
            m = rng.randint(2, 3)
            # with n < m some parties own no rounds; the marginal is still p*k/m
            owner = tuple([j % m for j in range(m)] + [rng.randrange(m) for _ in range(n - m)])[:n]
            k = rng.randint(1, m)
            return Instance(f"seed{seed}/#{index}", proc, f, tuple(owner), m, k)
        attempt += 1


def battery(seed: int = 0, count: int = 50, max_n: int = 5) -> list[Instance]:
    return [random_instance(seed, i, max_n) for i in range(count)]
