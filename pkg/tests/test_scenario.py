"""Scenario document parsing: schema checks and sub-document dispatch."""

from __future__ import annotations

import pytest

from branchsim import (
    Absorbing,
    Binomial,
    ConfigError,
    DaleyPolygamy,
    ExplicitPmf,
    Geometric,
    Min,
    Phi,
    Poisson,
    ScenarioConfig,
    Truncation,
)
from branchsim.engine import DEFAULT_POPULATION_CAP
from branchsim.scenario import (
    parse_growth,
    parse_law,
    parse_mating,
    parse_phi,
    parse_policy,
    parse_population,
)


def gw_doc(**extra):
    doc = {"version": 1, "experiment": "gw", "master_seed": 7, "trials": 10,
           "horizon": 5, "law": {"kind": "geometric", "r": 0.4}}
    doc.update(extra)
    return doc


# ---------------------------------------------------------------------- law

def test_parse_law_kinds():
    pmf = parse_law({"kind": "explicit_pmf", "pmf": {"0": 0.25, "2": 0.75}})
    assert isinstance(pmf, ExplicitPmf)
    assert pmf.p0 == pytest.approx(0.25)
    pairs = parse_law({"kind": "explicit_pmf", "pmf": [[0, 1], [3, 3]]})
    assert pairs.atoms == ((0, 0.25), (3, 0.75))
    poi = parse_law({"kind": "poisson", "lambda": 1.5})
    assert isinstance(poi, Poisson) and poi.lam == 1.5
    geo = parse_law({"kind": "geometric", "r": 0.6})
    assert isinstance(geo, Geometric) and geo.r == 0.6
    binom = parse_law({"kind": "binomial", "n": 2, "p": 0.5})
    assert isinstance(binom, Binomial) and (binom.n, binom.p) == (2, 0.5)


def test_parse_law_rejects_bad_documents():
    with pytest.raises(ConfigError):
        parse_law("poisson")
    with pytest.raises(ConfigError):
        parse_law({"kind": "zeta", "s": 2})
    with pytest.raises(ConfigError):
        parse_law({"kind": "poisson"})
    with pytest.raises(ConfigError):
        parse_law({"kind": "binomial", "n": 2.5, "p": 0.5})


# ----------------------------------------------------- policy sub-documents

def test_parse_growth_forms():
    assert parse_growth({"form": "constant", "c": 3})(100) == 3
    g = parse_growth({"form": "log", "a": 2.0, "base": 3.0})
    assert g.rounding == "floor"
    g_ceil = parse_growth({"form": "log", "a": 2.0, "base": 3.0,
                           "rounding": "ceil"})
    assert g_ceil(10) >= g(10)
    lin = parse_growth({"form": "linear", "a": 1.0, "c": 2.0})
    assert lin(5) == 7
    tab = parse_growth({"form": "table", "values": [1, 4, 9]})
    assert (tab(0), tab(2), tab(50)) == (1, 9, 9)
    with pytest.raises(ConfigError):
        parse_growth({"form": "cubic", "a": 1.0})
    with pytest.raises(ConfigError):
        parse_growth([1, 2, 3])


def test_parse_phi_forms():
    ident = parse_phi({"form": "identity"})
    assert ident(7) == 7
    const = parse_phi({"form": "constant", "c": 2})
    assert const(100) == 2
    lin = parse_phi({"form": "linear", "a": 2.0, "c": 1.0})
    assert lin(3) == 7
    tab = parse_phi({"form": "table", "values": [5, 1, 0]})
    assert (tab(0), tab(2), tab(9)) == (5, 0, 0)
    with pytest.raises(ConfigError):
        parse_phi({"form": "table", "values": []})
    with pytest.raises(ConfigError):
        parse_phi({"form": "quadratic"})


def test_parse_policy_kinds():
    trunc = parse_policy({"kind": "truncation", "g": {"form": "constant", "c": 3}})
    assert isinstance(trunc, Truncation)
    absorbing = parse_policy({"kind": "absorbing", "rule": {
        "kind": "disaster", "delta": {"form": "c_over_k", "c": 1.0}}})
    assert isinstance(absorbing, Absorbing)
    boundary = parse_policy({"kind": "absorbing", "rule": {
        "kind": "lower_boundary", "b": {"form": "constant", "c": 2}}})
    assert isinstance(boundary, Absorbing)
    as_absorption = parse_policy({"kind": "absorbing", "rule": {
        "kind": "truncation_as_absorption", "g": {"form": "linear", "a": 1.0, "c": 0.0}}})
    assert isinstance(as_absorption, Absorbing)
    phi = parse_policy({"kind": "phi", "phi": {"form": "identity"}})
    assert isinstance(phi, Phi)
    with pytest.raises(ConfigError):
        parse_policy({"kind": "absorbing", "rule": {"kind": "custom"}})
    with pytest.raises(ConfigError):
        parse_policy({"kind": "resampling"})


def test_parse_mating_kinds():
    assert isinstance(parse_mating({"kind": "min"}), Min)
    poly = parse_mating({"kind": "daley_polygamy", "d": 3})
    assert isinstance(poly, DaleyPolygamy) and poly.d == 3
    with pytest.raises(ConfigError):
        parse_mating({"kind": "custom"})
    with pytest.raises(ConfigError):
        parse_mating({"kind": "daley_polygamy", "d": 0})


def test_parse_population():
    pop = parse_population({"groups": [{"count": 2, "dist": {"kind": "uniform", "b": 1.0}},
                                       {"count": 3, "dist": {"kind": "exponential", "rate": 2.0}}],
                            "budget": 1.5})
    assert pop.total_count == 5 and pop.s == 1.5
    with pytest.raises(ConfigError):
        parse_population({"groups": [], "budget": 1.0})
    with pytest.raises(ConfigError):
        parse_population({"groups": [{"count": 1, "dist": {"kind": "pareto", "a": 2}}],
                          "budget": 1.0})


# ------------------------------------------------------------- whole config

def test_minimal_gw_config_and_defaults():
    cfg = ScenarioConfig.from_dict(gw_doc())
    assert cfg.experiment == "gw"
    assert isinstance(cfg.law, Geometric)
    assert cfg.policy is None
    assert cfg.initial_size == 1
    assert cfg.population_cap == DEFAULT_POPULATION_CAP
    assert cfg.coupled is False
    assert cfg.failure_budget == 0
    assert cfg.n_max == 10_000
    assert cfg.output.format == "csv" and cfg.output.path is None


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("version"),
    lambda d: d.update(version=2),
    lambda d: d.update(version=True),
    lambda d: d.update(experiment="galton"),
    lambda d: d.pop("master_seed"),
    lambda d: d.update(master_seed=-1),
    lambda d: d.update(master_seed=1 << 64),
    lambda d: d.update(trials=0),
    lambda d: d.update(trials=True),
    lambda d: d.update(trials=10.5),
    lambda d: d.pop("horizon"),
    lambda d: d.pop("law"),
    lambda d: d.update(policy={"kind": "truncation", "g": {"form": "constant", "c": 3}}),
    lambda d: d.update(coupled="yes"),
    lambda d: d.update(output={"format": "xml"}),
])
def test_gw_config_rejections(mutate):
    doc = gw_doc()
    mutate(doc)
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(doc)


def test_controlled_experiment_policy_matrix():
    doc = gw_doc(experiment="controlled",
                 policy={"kind": "truncation", "g": {"form": "constant", "c": 3}})
    cfg = ScenarioConfig.from_dict(doc)
    assert isinstance(cfg.policy, Truncation)
    with pytest.raises(ConfigError):  # controlled needs truncation or absorbing
        ScenarioConfig.from_dict(gw_doc(experiment="controlled"))
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(gw_doc(
            experiment="controlled",
            policy={"kind": "phi", "phi": {"form": "identity"}}))


def test_phi_experiment_requires_phi_policy():
    cfg = ScenarioConfig.from_dict(gw_doc(
        experiment="phi", policy={"kind": "phi", "phi": {"form": "identity"}}))
    assert isinstance(cfg.policy, Phi)
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(gw_doc(experiment="phi"))
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(gw_doc(
            experiment="phi",
            policy={"kind": "truncation", "g": {"form": "constant", "c": 3}}))


def test_bisexual_config():
    doc = {"version": 1, "experiment": "bisexual", "master_seed": 3,
           "trials": 10, "horizon": 5, "initial_units": 2,
           "law": {"kind": "poisson", "lambda": 2.0}, "alpha": 0.5,
           "mating": {"kind": "min"}}
    cfg = ScenarioConfig.from_dict(doc)
    assert cfg.alpha == 0.5 and isinstance(cfg.mating, Min)
    assert cfg.initial_units == 2
    for bad_alpha in (0.0, 1.0, -0.2):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({**doc, "alpha": bad_alpha})
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({k: v for k, v in doc.items() if k != "mating"})


def test_bcl_series_schedule_forms():
    base = gw_doc(experiment="bcl_series")
    cfg = ScenarioConfig.from_dict(base)
    assert cfg.schedule == {"family": "linear", "max_points": 50}
    cfg = ScenarioConfig.from_dict(gw_doc(experiment="bcl_series",
                                          schedule={"values": [1, 2, 4]}))
    assert cfg.schedule == {"values": [1, 2, 4]}
    cfg = ScenarioConfig.from_dict(gw_doc(experiment="bcl_series",
                                          schedule={"family": "search",
                                                    "max_points": 8}))
    assert cfg.schedule == {"family": "search", "max_points": 8}
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(gw_doc(experiment="bcl_series",
                                        schedule={"family": "fibonacci"}))
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(gw_doc(experiment="bcl_series",
                                        schedule={"max_points": 1}))


def test_brs_config():
    doc = {"version": 1, "experiment": "brs", "master_seed": 11, "trials": 100,
           "population": {"groups": [{"count": 2, "dist": {"kind": "uniform", "b": 1.0}}],
                          "budget": 0.25},
           "modes": ["independent", "comonotone"]}
    cfg = ScenarioConfig.from_dict(doc)
    assert cfg.population.total_count == 2
    assert cfg.modes == ("independent", "comonotone")
    assert cfg.horizon is None  # brs has no generational horizon
    default = ScenarioConfig.from_dict({k: v for k, v in doc.items() if k != "modes"})
    assert default.modes == ("independent",)
    for bad in ([], ["bootstrap"], "independent"):
        with pytest.raises(ConfigError):
            ScenarioConfig.from_dict({**doc, "modes": bad})
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({k: v for k, v in doc.items() if k != "population"})


def test_output_spec_parsing():
    cfg = ScenarioConfig.from_dict(gw_doc(output={"format": "json",
                                                  "path": "out.json"}))
    assert cfg.output.format == "json" and cfg.output.path == "out.json"
