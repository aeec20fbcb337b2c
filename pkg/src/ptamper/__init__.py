"""Rejection-sampling tampering attacks on random processes and multi-party poisoning."""

__version__ = "0.1.0"

from .covering import (
    CoveringDistribution,
    TamperPlan,
    condition_on_parties,
    make_explicit_covering,
    make_iid_covering,
    make_party_covering,
    verify_covering,
)
from .errors import PTamperError
from .mpplearn import (
    AdversaryObjective,
    AttackReport,
    ProtocolSpec,
    assemble_adversary,
    best_fixed_corruption,
    preset,
    run_attack,
)
from .oracle import exact_attacked_expectation, exact_covering_average, moments, tampered_law
from .process import ExplicitProcess, GenerativeProcess, ObjectiveFunction, RandomProcess, make_objective
from .seeding import derive_seed
from .tamper import TamperStrategy, required_iterations, run_tampered_execution

__all__ = [
    "AdversaryObjective",
    "AttackReport",
    "CoveringDistribution",
    "ExplicitProcess",
    "GenerativeProcess",
    "ObjectiveFunction",
    "PTamperError",
    "ProtocolSpec",
    "RandomProcess",
    "TamperPlan",
    "TamperStrategy",
    "assemble_adversary",
    "best_fixed_corruption",
    "condition_on_parties",
    "derive_seed",
    "exact_attacked_expectation",
    "exact_covering_average",
    "make_explicit_covering",
    "make_iid_covering",
    "make_objective",
    "make_party_covering",
    "moments",
    "preset",
    "required_iterations",
    "run_attack",
    "run_tampered_execution",
    "tampered_law",
    "verify_covering",
]
