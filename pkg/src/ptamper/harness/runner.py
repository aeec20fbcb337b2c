"""Experiment configuration, dispatch and run manifests."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

from .. import __version__, bounds
from ..covering import CoveringDistribution, covering_from_json, make_iid_covering, verify_covering
from ..errors import PTamperError
from ..mpplearn import (
    CSV_COLUMNS,
    TARGETED,
    AdversaryObjective,
    best_fixed_corruption,
    preset,
    protocol_from_json,
)
from ..oracle import (
    exact_covering_average,
    moments,
    verify_covering_identity,
    verify_likelihood_ratio,
)
from ..process import (
    DEFAULT_SUPPORT_CAP,
    ExplicitProcess,
    check_support_cap,
    objective_from_json,
    process_from_json,
)
from ..seeding import DEFAULT_MASTER_SEED, derive_seed
from ..tamper import TamperStrategy, required_iterations, run_tampered_execution
from . import suite as suite_mod

COMMANDS = ("bias-exact", "bias-sim", "bounds-check", "covering-verify", "mpp-attack", "suite")
FORMATS = ("json", "csv")
MODES = ("exact", "montecarlo")
THREADS_ENV = "PTAMPER_THREADS"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INVALID = 2


class ConfigError(PTamperError, ValueError):
    """Invalid experiment configuration or input file."""


@dataclass
class ExperimentConfig:
    command: str
    process: Optional[dict] = None
    objective: Any = None
    covering: Optional[dict] = None
    protocol: Optional[dict] = None
    preset: Optional[str] = None
    adversary_objective: str = TARGETED
    target: Optional[list] = None
    mode: str = "exact"
    p: Optional[float] = None
    k: Optional[int] = None
    m: Optional[int] = None
    eps: float = 0.1
    alpha: Optional[float] = None
    trials: int = 10_000
    master_seed: int = DEFAULT_MASTER_SEED
    support_cap: int = DEFAULT_SUPPORT_CAP
    out: Optional[str] = None
    format: str = "json"

    def validate(self) -> "ExperimentConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be json or csv, got {self.format!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be exact or montecarlo, got {self.mode!r}")
        if int(self.trials) < 1:
            raise ConfigError("trials must be >= 1")
        if not 0.0 < float(self.eps) <= 1.0:
            raise ConfigError(f"eps={self.eps} outside (0, 1]")
        if self.p is not None and not 0.0 <= float(self.p) <= 1.0:
            raise ConfigError(f"p={self.p} outside [0, 1]")
        if self.k is not None and int(self.k) < 1:
            raise ConfigError("k must be >= 1")
        if self.m is not None and int(self.m) < 1:
            raise ConfigError("m must be >= 1")
        if self.alpha is not None and not 0.0 <= float(self.alpha) <= 1.0:
            raise ConfigError(f"alpha={self.alpha} outside [0, 1]")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if int(self.support_cap) < 1:
            raise ConfigError("support cap must be >= 1")
        needs_proc = self.command in ("bias-exact", "bias-sim", "bounds-check")
        if needs_proc and (self.process is None or self.objective is None):
            raise ConfigError(f"{self.command} needs a process and an objective")
        if self.command == "covering-verify" and self.covering is None and self.p is None:
            raise ConfigError("covering-verify needs a covering definition or --p with a process")
        if self.command == "mpp-attack" and self.protocol is None and self.preset is None:
            raise ConfigError("mpp-attack needs --preset or a protocol definition")
        return self

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class RunManifest:
    config: dict
    version: str
    command: str
    status: str
    checks: list[dict] = field(default_factory=list)
    results: dict = field(default_factory=dict)
    wall_times: dict = field(default_factory=dict)
    seeds: list[dict] = field(default_factory=list)
    rows: list[list] = field(default_factory=list, repr=False)
    columns: tuple[str, ...] = field(default=(), repr=False)

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.status == "pass" else EXIT_CHECK_FAILED

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "version": self.version,
            "command": self.command,
            "status": self.status,
            "checks": self.checks,
            "results": self.results,
            "wall_times": self.wall_times,
            "seeds": self.seeds,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def render(self, fmt: str) -> str:
        if fmt == "csv":
            return self.to_csv()
        return json.dumps(self.to_json(), indent=2, sort_keys=False, default=_json_default) + "\n"


def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(v).lower()
    if isinstance(v, float):
        return f"{v:.12g}"
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def _json_default(o):
    if isinstance(o, (frozenset, set)):
        return sorted(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"{type(o).__name__} is not JSON serializable")


def _load(ref) -> Any:
    """Inline JSON object or a path to a JSON file."""
    if isinstance(ref, (str, os.PathLike)) and str(ref).endswith(".json"):
        try:
            return json.loads(Path(ref).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read {ref}: {exc}") from exc
    return ref


def load_config(path: Optional[str], overrides: dict) -> ExperimentConfig:
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        if "seed" in data and "master_seed" not in data:
            data["master_seed"] = data.pop("seed")
    data.update({k: v for k, v in overrides.items() if v is not None})
    if "command" not in data:
        raise ConfigError("no command given")
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key in ("process", "covering", "protocol", "objective"):
        if key in data:
            data[key] = _load(data[key])
    return ExperimentConfig(**data).validate()


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer") from exc


def _check(name: str, value: float, threshold: float, kind: str = ">=", detail: str = "") -> dict:
    ok = value >= threshold if kind == ">=" else value <= threshold
    return {"name": name, "value": value, "threshold": threshold, "relation": kind,
            "status": "pass" if ok else "fail", "detail": detail}


def _explicit_process(cfg: ExperimentConfig) -> ExplicitProcess:
    proc = process_from_json(cfg.process)
    if not isinstance(proc, ExplicitProcess):
        raise ConfigError("this command needs an explicit process definition")
    check_support_cap(proc, int(cfg.support_cap))
    return proc


def _covering(cfg: ExperimentConfig, n: Optional[int]) -> CoveringDistribution:
    if cfg.covering is not None:
        obj = dict(cfg.covering)
        for key in ("p", "k", "m"):
            if getattr(cfg, key) is not None and obj.get("kind") != "explicit":
                obj[key] = getattr(cfg, key)
        return covering_from_json(obj, n)
    if n is None:
        raise ConfigError("an IID covering needs a process to fix n")
    return make_iid_covering(n, 0.5 if cfg.p is None else float(cfg.p))


def _bias_exact(cfg: ExperimentConfig, man: RunManifest) -> None:
    proc = _explicit_process(cfg)
    f = objective_from_json(cfg.objective)
    cov = _covering(cfg, proc.n)
    q = cov.target_p
    mom = moments(proc, f, q, int(cfg.support_cap))
    attacked = exact_covering_average(proc, f, cov)
    bound = bounds.tampering_bound(mom.mu, mom.moment_1p, q)
    man.results = {"covering": cov.to_json(), "p": q, "mu": mom.mu, "nu": mom.nu,
                   "moment_1p": mom.moment_1p, "attacked": attacked, "bound": bound}
    man.checks.append(_check("tampering_bound", attacked, bound - suite_mod.BOUND_TOL))
    if f.boolean:
        bb = bounds.boolean_bound(mom.mu, q)
        man.results["boolean_bound"] = bb
        man.checks.append(_check("boolean_bound", attacked, bb - suite_mod.BOUND_TOL))
    man.columns = ("p", "mu", "attacked", "bound")
    man.rows = [[q, mom.mu, attacked, bound]]


def _bias_sim(cfg: ExperimentConfig, man: RunManifest) -> None:
    proc = _explicit_process(cfg)
    f = objective_from_json(cfg.objective)
    cov = _covering(cfg, proc.n)
    q = cov.target_p
    mom = moments(proc, f, q, int(cfg.support_cap))
    eps = float(cfg.eps)
    budget = int(cfg.k) if cfg.k is not None else required_iterations(proc.n, eps, mom.mu)
    strategy = TamperStrategy.iterated(budget)
    seed, trials = int(cfg.master_seed), int(cfg.trials)

    def trial(t: int) -> tuple[float, int]:
        rng = random.Random(derive_seed(seed, ["trial", t]))
        exe = run_tampered_execution(proc, f, strategy, cov.sample(rng), rng)
        return exe.objective_value, exe.max_iterations

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        # map keeps trial order, so the summary is independent of scheduling
        outcomes = list(pool.map(trial, range(trials), chunksize=256))
    values = [v for v, _ in outcomes]
    mean = math.fsum(values) / trials
    var = math.fsum((v - mean) ** 2 for v in values) / (trials - 1) if trials > 1 else 0.0
    se = math.sqrt(var / trials)
    max_it = max(it for _, it in outcomes)
    bound = bounds.tampering_bound(mom.mu, mom.moment_1p, q)
    threshold = bound - eps - suite_mod.SE_MULT * se
    man.seeds.append({"labels": ["trial", "<t>"], "master_seed": seed, "first": derive_seed(seed, ["trial", 0])})
    man.results = {"covering": cov.to_json(), "p": q, "mu": mom.mu, "eps": eps, "budget": budget,
                   "trials": trials, "mean": mean, "se": se, "bound": bound, "max_iterations": max_it}
    man.checks.append(_check("bias_mc", mean, threshold, ">=", "mean >= bound - eps - 4 SE"))
    man.checks.append(_check("iteration_budget", max_it, budget, "<="))
    man.columns = ("p", "mu", "eps", "budget", "trials", "mean", "se", "bound", "max_iterations", "seed")
    man.rows = [[q, mom.mu, eps, budget, trials, mean, se, bound, max_it, seed]]


def _bounds_check(cfg: ExperimentConfig, man: RunManifest) -> None:
    proc = _explicit_process(cfg)
    f = objective_from_json(cfg.objective)
    cov = _covering(cfg, proc.n)
    q = cov.target_p
    lr = verify_likelihood_ratio(proc, f, int(cfg.support_cap))
    man.checks.append(_check("likelihood_ratio", lr, suite_mod.LIKELIHOOD_TOL, "<="))
    worst, degenerate, checked = 0.0, 0, 0
    for y, _ in proc.support():
        res = verify_covering_identity(proc, f, cov, y, cap=int(cfg.support_cap))
        if res.status == "degenerate":
            degenerate += 1
        else:
            checked += 1
            worst = max(worst, res.residual)
    man.checks.append(_check("covering_identity", worst, suite_mod.IDENTITY_TOL, "<=",
                             f"{checked} sequences, {degenerate} degenerate"))
    if degenerate:
        man.checks.append({"name": "covering_identity_degenerate", "value": degenerate, "threshold": None,
                           "relation": None, "status": "degenerate", "detail": "reported, non-fatal"})
    mom = moments(proc, f, q, int(cfg.support_cap))
    gamma = bounds.tampering_bound(mom.mu, mom.moment_1p, q) - mom.mu
    jg = bounds.jensen_gap_bound(mom.mu, mom.nu, q)
    man.checks.append(_check("jensen_gap_sharp", gamma - jg.sharp, -suite_mod.GAP_TOL))
    man.checks.append(_check("jensen_gap_weak", jg.sharp - jg.weak, -suite_mod.GAP_TOL))
    man.results = {"covering": cov.to_json(), "p": q, "mu": mom.mu, "nu": mom.nu, "gamma": gamma,
                   "sharp": jg.sharp, "weak": jg.weak}
    man.columns = ("name", "value", "threshold", "relation", "status")
    man.rows = [[c["name"], c["value"], c["threshold"], c["relation"], c["status"]] for c in man.checks]


def _covering_verify(cfg: ExperimentConfig, man: RunManifest) -> None:
    n = None
    if cfg.process is not None:
        n = process_from_json(cfg.process).n
    elif cfg.covering is not None:
        n = cfg.covering.get("n")
    cov = _covering(cfg, n)
    seed = int(cfg.master_seed)
    rng = random.Random(derive_seed(seed, ["covering"]))
    rep = verify_covering(cov, int(cfg.trials), rng)
    man.seeds.append({"labels": ["covering"], "master_seed": seed, "seed": derive_seed(seed, ["covering"])})
    man.results = {"covering": cov.to_json(), **rep.to_json()}
    man.checks.append({"name": "marginals", "value": len(rep.flagged), "threshold": 0, "relation": "<=",
                       "status": "pass" if rep.passed else "fail", "detail": f"flagged {rep.flagged}"})
    man.columns = ("index", "empirical", "analytic", "z", "flagged")
    man.rows = [[r[c] for c in man.columns] for r in rep.rows]


def _protocol(cfg: ExperimentConfig):
    if cfg.protocol is not None:
        spec = protocol_from_json(cfg.protocol)
    else:
        try:
            spec = preset(cfg.preset)
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
    if cfg.alpha is not None or cfg.m is not None:
        data = spec.to_json()
        if cfg.alpha is not None:
            data["alpha"] = float(cfg.alpha)
        if cfg.m is not None and int(cfg.m) != spec.m:
            raise ConfigError(f"--m {cfg.m} does not match the protocol's {spec.m} parties")
        spec = protocol_from_json(data)
    return spec


def _mpp_attack(cfg: ExperimentConfig, man: RunManifest) -> None:
    spec = _protocol(cfg)
    target = tuple(cfg.target) if cfg.target is not None else None
    if cfg.adversary_objective == TARGETED and target is None:
        target = spec.target
    obj = AdversaryObjective(cfg.adversary_objective, target)
    k = 1 if cfg.k is None else int(cfg.k)
    p = 1.0 if cfg.p is None else float(cfg.p)
    seed = int(cfg.master_seed)
    coalition, rep = best_fixed_corruption(spec, obj, k, p, float(cfg.eps), cfg.mode, int(cfg.trials), seed)
    if cfg.mode == "montecarlo":
        man.seeds.append({"labels": ["coalition", "<C...>", "trial", "<t>"], "master_seed": seed})
    man.results = {"coalition": sorted(coalition), "report": rep.to_json()}
    rel = "<=" if rep.direction == "upper" else ">="
    man.checks.append({"name": f"mpp_{obj.kind}", "value": rep.attacked, "threshold": rep.bound,
                       "relation": rel, "margin": rep.margin,
                       "status": "pass" if rep.meets_bound else "fail"})
    man.columns = CSV_COLUMNS
    man.rows = [rep.csv_row()]


def _suite(cfg: ExperimentConfig, man: RunManifest) -> None:
    ctx = suite_mod.SuiteContext(seed=int(cfg.master_seed))
    results = suite_mod.run_suite(ctx)
    for r in results:
        man.checks.append(r.to_json())
        man.wall_times[f"criterion_{r.number}"] = r.runtime
    man.columns = ("criterion", "name", "status", "runtime", "summary")
    man.rows = [[r.number, r.name, "pass" if r.passed else "fail", r.runtime, r.summary] for r in results]


DISPATCH = {
    "bias-exact": _bias_exact,
    "bias-sim": _bias_sim,
    "bounds-check": _bounds_check,
    "covering-verify": _covering_verify,
    "mpp-attack": _mpp_attack,
    "suite": _suite,
}


def run(cfg: ExperimentConfig) -> RunManifest:
    """Dispatch ``cfg.command``; the manifest status is fail if any check failed."""
    cfg.validate()
    man = RunManifest(config=cfg.to_json(), version=__version__, command=cfg.command, status="pass")
    t0 = time.perf_counter()
    DISPATCH[cfg.command](cfg, man)
    man.wall_times["total"] = time.perf_counter() - t0
    man.status = "fail" if any(c["status"] == "fail" for c in man.checks) else "pass"
    return man
