"""Scenario configs: a versioned JSON document describing one experiment.

The document selects an experiment (gw, controlled, phi, bisexual,
bcl_series, brs) and supplies the owning modules' sub-documents: offspring
law, control policy, mating function, claim population.  All randomness
flows from ``master_seed``; nothing reads the clock or OS entropy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import brs as brs_mod
from . import control as control_mod
from .bisexual import CustomMating, DaleyMonogamy, DaleyPolygamy, Min
from .engine import DEFAULT_POPULATION_CAP
from .errors import ConfigError
from .law import Binomial, ExplicitPmf, Geometric, OffspringLaw, Poisson

SCHEMA_VERSION = 1
EXPERIMENTS = ("gw", "controlled", "phi", "bisexual", "bcl_series", "brs")


def _require(doc: dict, key: str, context: str):
    if key not in doc:
        raise ConfigError(f"{context}: missing required key {key!r}")
    return doc[key]


def _as_int(value, context: str, minimum=None) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(f"{context}: expected an integer, got {value!r}")
    v = int(value)
    if minimum is not None and v < minimum:
        raise ConfigError(f"{context}: must be >= {minimum}, got {v}")
    return v


def _as_number(value, context: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{context}: expected a number, got {value!r}")
    return float(value)


def parse_law(doc) -> OffspringLaw:
    if not isinstance(doc, dict):
        raise ConfigError(f"law: expected an object, got {doc!r}")
    kind = _require(doc, "kind", "law")
    if kind == "explicit_pmf":
        pmf = _require(doc, "pmf", "law")
        if isinstance(pmf, dict):
            pairs = [(int(k), v) for k, v in pmf.items()]
        else:
            pairs = [(k, v) for k, v in pmf]
        return ExplicitPmf(pairs)
    if kind == "poisson":
        return Poisson(_as_number(_require(doc, "lambda", "poisson law"), "lambda"))
    if kind == "geometric":
        return Geometric(_as_number(_require(doc, "r", "geometric law"), "r"))
    if kind == "binomial":
        return Binomial(_as_int(_require(doc, "n", "binomial law"), "n", 1),
                        _as_number(_require(doc, "p", "binomial law"), "p"))
    raise ConfigError(f"law: unknown kind {kind!r}")


def parse_growth(doc) -> control_mod.GrowthFunction:
    if not isinstance(doc, dict):
        raise ConfigError(f"growth function: expected an object, got {doc!r}")
    form = _require(doc, "form", "growth function")
    if form == "constant":
        return control_mod.GrowthFunction.constant(_as_int(_require(doc, "c", "constant form"), "c", 0))
    if form == "log":
        return control_mod.GrowthFunction.log(
            _as_number(_require(doc, "a", "log form"), "a"),
            _as_number(_require(doc, "base", "log form"), "base"),
            doc.get("rounding", "floor"))
    if form == "linear":
        return control_mod.GrowthFunction.linear(
            _as_number(_require(doc, "a", "linear form"), "a"),
            _as_number(_require(doc, "c", "linear form"), "c"))
    if form == "table":
        return control_mod.GrowthFunction.from_table(_require(doc, "values", "table form"))
    raise ConfigError(f"growth function: unknown form {form!r}")


def parse_phi(doc):
    if not isinstance(doc, dict):
        raise ConfigError(f"phi: expected an object, got {doc!r}")
    form = _require(doc, "form", "phi")
    if form == "identity":
        return lambda x: x
    if form == "constant":
        c = _as_int(_require(doc, "c", "phi constant"), "c", 0)
        return lambda x: c
    if form == "linear":
        a = _as_number(_require(doc, "a", "phi linear"), "a")
        c = _as_number(_require(doc, "c", "phi linear"), "c")
        return lambda x: max(0, int(a * x + c))
    if form == "table":
        values = [_as_int(v, "phi table entry", 0) for v in _require(doc, "values", "phi table")]
        if not values:
            raise ConfigError("phi table needs at least one value")
        return lambda x: values[x] if x < len(values) else values[-1]
    raise ConfigError(f"phi: unknown form {form!r}")


def parse_delta(doc) -> control_mod.DisasterSchedule:
    if not isinstance(doc, dict):
        raise ConfigError(f"disaster schedule: expected an object, got {doc!r}")
    form = _require(doc, "form", "disaster schedule")
    if form == "table":
        return control_mod.DisasterSchedule.from_table(_require(doc, "values", "disaster table"))
    if form == "c_over_k":
        return control_mod.DisasterSchedule.c_over_k(_as_number(_require(doc, "c", "c/k schedule"), "c"))
    if form == "constant":
        return control_mod.DisasterSchedule.constant(_as_number(_require(doc, "c", "constant schedule"), "c"))
    raise ConfigError(f"disaster schedule: unknown form {form!r}")


def parse_absorbing_rule(doc):
    if not isinstance(doc, dict):
        raise ConfigError(f"absorbing rule: expected an object, got {doc!r}")
    kind = _require(doc, "kind", "absorbing rule")
    if kind == "truncation_as_absorption":
        return control_mod.TruncationAsAbsorption(parse_growth(_require(doc, "g", "rule")))
    if kind == "disaster":
        return control_mod.Disaster(parse_delta(_require(doc, "delta", "disaster rule")))
    if kind == "lower_boundary":
        return control_mod.LowerBoundary(parse_growth(_require(doc, "b", "lower boundary rule")))
    raise ConfigError(f"absorbing rule: unknown kind {kind!r} "
                      "(custom rules are API-only)")


def parse_policy(doc):
    if not isinstance(doc, dict):
        raise ConfigError(f"policy: expected an object, got {doc!r}")
    kind = _require(doc, "kind", "policy")
    if kind == "truncation":
        return control_mod.Truncation(parse_growth(_require(doc, "g", "truncation policy")))
    if kind == "absorbing":
        return control_mod.Absorbing(parse_absorbing_rule(_require(doc, "rule", "absorbing policy")))
    if kind == "phi":
        return control_mod.Phi(parse_phi(_require(doc, "phi", "phi policy")))
    raise ConfigError(f"policy: unknown kind {kind!r}")


def parse_mating(doc):
    if not isinstance(doc, dict):
        raise ConfigError(f"mating: expected an object, got {doc!r}")
    kind = _require(doc, "kind", "mating function")
    if kind == "min":
        return Min()
    if kind == "daley_monogamy":
        return DaleyMonogamy()
    if kind == "daley_polygamy":
        return DaleyPolygamy(_as_int(_require(doc, "d", "polygamy"), "d", 1))
    raise ConfigError(f"mating function: unknown kind {kind!r} "
                      "(custom mating functions are API-only)")


def parse_claim_distribution(doc) -> brs_mod.ClaimDistribution:
    if not isinstance(doc, dict):
        raise ConfigError(f"claim distribution: expected an object, got {doc!r}")
    kind = _require(doc, "kind", "claim distribution")
    if kind == "uniform":
        return brs_mod.Uniform(_as_number(_require(doc, "b", "uniform claims"), "b"))
    if kind == "exponential":
        return brs_mod.Exponential(_as_number(_require(doc, "rate", "exponential claims"), "rate"))
    raise ConfigError(f"claim distribution: unknown kind {kind!r} "
                      "(custom distributions are API-only)")


def parse_population(doc) -> brs_mod.Population:
    if not isinstance(doc, dict):
        raise ConfigError(f"population: expected an object, got {doc!r}")
    groups_doc = _require(doc, "groups", "population")
    if not isinstance(groups_doc, list) or not groups_doc:
        raise ConfigError("population: groups must be a nonempty list")
    groups = []
    for g in groups_doc:
        count = _as_int(_require(g, "count", "population group"), "count", 1)
        dist = parse_claim_distribution(_require(g, "dist", "population group"))
        groups.append((count, dist))
    budget = _as_number(_require(doc, "budget", "population"), "budget")
    return brs_mod.Population(groups, budget)


@dataclass
class OutputSpec:
    format: str = "csv"
    path: str | None = None


@dataclass
class ScenarioConfig:
    """Validated experiment description; see ``from_dict`` for the schema."""

    version: int
    experiment: str
    master_seed: int
    trials: int
    horizon: int | None = None
    law: OffspringLaw | None = None
    policy: object | None = None
    alpha: float | None = None
    mating: object | None = None
    initial_units: int = 1
    initial_size: int = 1
    population_cap: int = DEFAULT_POPULATION_CAP
    coupled: bool = False
    failure_budget: int = 0
    sample_trajectories: int = 0
    population: brs_mod.Population | None = None
    modes: tuple[str, ...] = ("independent",)
    schedule: dict = field(default_factory=dict)
    n_max: int = 10_000
    output: OutputSpec = field(default_factory=OutputSpec)

    @staticmethod
    def from_dict(doc: dict) -> "ScenarioConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config root must be an object")
        version = _as_int(_require(doc, "version", "config"), "version")
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config version {version}; "
                              f"this artifact reads version {SCHEMA_VERSION}")
        experiment = _require(doc, "experiment", "config")
        if experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {experiment!r}; "
                              f"expected one of {', '.join(EXPERIMENTS)}")
        master_seed = _as_int(_require(doc, "master_seed", "config"), "master_seed", 0)
        if master_seed >= 1 << 64:
            raise ConfigError(f"master_seed must fit in 64 bits, got {master_seed}")
        trials = _as_int(_require(doc, "trials", "config"), "trials", 1)

        cfg = ScenarioConfig(version=version, experiment=experiment,
                             master_seed=master_seed, trials=trials)
        if "horizon" in doc:
            cfg.horizon = _as_int(doc["horizon"], "horizon", 1)
        if "initial_size" in doc:
            cfg.initial_size = _as_int(doc["initial_size"], "initial_size", 0)
        if "initial_units" in doc:
            cfg.initial_units = _as_int(doc["initial_units"], "initial_units", 0)
        if "population_cap" in doc:
            cfg.population_cap = _as_int(doc["population_cap"], "population_cap", 1)
        if "coupled" in doc:
            if not isinstance(doc["coupled"], bool):
                raise ConfigError(f"coupled: expected a boolean, got {doc['coupled']!r}")
            cfg.coupled = doc["coupled"]
        if "failure_budget" in doc:
            cfg.failure_budget = _as_int(doc["failure_budget"], "failure_budget", 0)
        if "sample_trajectories" in doc:
            cfg.sample_trajectories = _as_int(doc["sample_trajectories"],
                                              "sample_trajectories", 0)
        if "n_max" in doc:
            cfg.n_max = _as_int(doc["n_max"], "n_max", 100)
        if "output" in doc:
            out = doc["output"]
            if not isinstance(out, dict):
                raise ConfigError(f"output: expected an object, got {out!r}")
            fmt = out.get("format", "csv")
            if fmt not in ("csv", "json"):
                raise ConfigError(f"output format must be csv or json, got {fmt!r}")
            cfg.output = OutputSpec(format=fmt, path=out.get("path"))

        needs_horizon = experiment in ("gw", "controlled", "phi", "bisexual", "bcl_series")
        if needs_horizon and cfg.horizon is None:
            raise ConfigError(f"experiment {experiment!r} requires a horizon")

        if experiment in ("gw", "controlled", "phi", "bcl_series"):
            cfg.law = parse_law(_require(doc, "law", "config"))
            if "policy" in doc:
                cfg.policy = parse_policy(doc["policy"])
            if experiment == "controlled" and not isinstance(
                    cfg.policy, (control_mod.Truncation, control_mod.Absorbing)):
                raise ConfigError("controlled experiment requires a truncation "
                                  "or absorbing policy")
            if experiment == "phi" and not isinstance(cfg.policy, control_mod.Phi):
                raise ConfigError("phi experiment requires a phi policy")
            if experiment == "gw" and cfg.policy is not None:
                raise ConfigError("gw experiment takes no policy")
            if experiment == "bcl_series":
                sched = doc.get("schedule", {"family": "linear", "max_points": 50})
                if not isinstance(sched, dict):
                    raise ConfigError(f"schedule: expected an object, got {sched!r}")
                if "values" in sched:
                    values = [_as_int(v, "schedule value", 1) for v in sched["values"]]
                    cfg.schedule = {"values": values}
                else:
                    family = sched.get("family", "linear")
                    if family not in ("linear", "powers", "squares", "search"):
                        raise ConfigError(f"schedule family must be linear, powers, "
                                          f"squares or search, got {family!r}")
                    cfg.schedule = {"family": family,
                                    "max_points": _as_int(sched.get("max_points", 50),
                                                          "max_points", 2)}
        elif experiment == "bisexual":
            cfg.law = parse_law(_require(doc, "law", "config"))
            cfg.alpha = _as_number(_require(doc, "alpha", "config"), "alpha")
            if not 0.0 < cfg.alpha < 1.0:
                raise ConfigError(f"alpha must lie strictly inside (0, 1), got {cfg.alpha}")
            cfg.mating = parse_mating(_require(doc, "mating", "config"))
        elif experiment == "brs":
            cfg.population = parse_population(_require(doc, "population", "config"))
            modes = doc.get("modes", ["independent"])
            if (not isinstance(modes, list) or not modes
                    or any(m not in ("independent", "comonotone") for m in modes)):
                raise ConfigError(f"modes must be a nonempty list drawn from "
                                  f"independent/comonotone, got {modes!r}")
            cfg.modes = tuple(modes)
        return cfg
