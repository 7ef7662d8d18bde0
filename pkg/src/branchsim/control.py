"""Control policies for branching runs and the series-based extinction criteria.

Policies come in three families: truncation of each generation at a cap g(n),
random absorption of offspring (including disasters and lower boundaries),
and phi-control where phi(current size) units reproduce.  The criterion
checkers classify sum_n q^g(n) as divergent or convergent, exactly for
symbolic g and heuristically otherwise.
"""

from __future__ import annotations

import inspect
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, InvalidRuleError

CLASSIFY_EPS = 0.05  # dead band around decay exponent 1 for the heuristic path


@dataclass(frozen=True)
class GrowthFunction:
    """Integer-valued function of a nonnegative integer index.

    Symbolic forms (constant, log, linear) allow exact series classification;
    tables and raw callables fall back to the heuristic classifier.  The log
    form rounds a*log_base(n + 1) up or down and is floored at 1, so a cap
    never orders the population to zero on its own.  Tables hold their last
    value beyond the end.
    """

    form: str
    c: float = 0.0
    a: float = 0.0
    base: float = 2.0
    rounding: str = "floor"
    table: tuple[int, ...] = ()
    fn: Callable[[int], int] | None = None

    @staticmethod
    def constant(c: int) -> "GrowthFunction":
        if int(c) != c or c < 0:
            raise ConfigError(f"constant form needs a nonnegative integer, got {c}")
        return GrowthFunction(form="constant", c=int(c))

    @staticmethod
    def log(a: float, base: float, rounding: str = "floor") -> "GrowthFunction":
        if a <= 0 or not math.isfinite(a):
            raise ConfigError(f"log form needs coefficient a > 0, got {a}")
        if base <= 1 or not math.isfinite(base):
            raise ConfigError(f"log form needs base > 1, got {base}")
        if rounding not in ("floor", "ceil"):
            raise ConfigError(f"rounding must be 'floor' or 'ceil', got {rounding!r}")
        return GrowthFunction(form="log", a=float(a), base=float(base), rounding=rounding)

    @staticmethod
    def linear(a: float, c: float) -> "GrowthFunction":
        if a < 0:
            raise ConfigError(f"linear form needs slope a >= 0, got {a}")
        if c < 0:
            raise ConfigError(f"linear form needs intercept c >= 0, got {c}")
        return GrowthFunction(form="linear", a=float(a), c=float(c))

    @staticmethod
    def from_table(values) -> "GrowthFunction":
        vals = tuple(int(v) for v in values)
        if not vals:
            raise ConfigError("table form needs at least one value")
        if any(v < 0 for v in vals) or any(v != w for v, w in zip(vals, values)):
            raise ConfigError("table entries must be nonnegative integers")
        return GrowthFunction(form="table", table=vals)

    @staticmethod
    def from_callable(fn: Callable[[int], int]) -> "GrowthFunction":
        return GrowthFunction(form="callable", fn=fn)

    @property
    def symbolic(self) -> bool:
        return self.form in ("constant", "log", "linear")

    def __call__(self, n: int) -> int:
        if self.form == "constant":
            return int(self.c)
        if self.form == "log":
            x = self.a * math.log(n + 1) / math.log(self.base)
            v = math.floor(x) if self.rounding == "floor" else math.ceil(x)
            return max(1, v)
        if self.form == "linear":
            return int(self.a * n + self.c)
        if self.form == "table":
            return self.table[n] if n < len(self.table) else self.table[-1]
        v = self.fn(n)
        if v < 0 or int(v) != v:
            raise ConfigError(f"growth callable returned {v!r} at n={n}; "
                              "expected a nonnegative integer")
        return int(v)


@dataclass(frozen=True)
class DisasterSchedule:
    """Per-generation probability of losing every particle at once.

    Forms: an explicit table (0 beyond its end), c/k in the generation k, or
    a constant.  Probabilities are clamped to [0, 1].
    """

    form: str
    c: float = 0.0
    table: tuple[float, ...] = ()

    @staticmethod
    def from_table(values) -> "DisasterSchedule":
        vals = tuple(float(v) for v in values)
        if any(not 0.0 <= v <= 1.0 for v in vals):
            raise ConfigError("disaster probabilities must lie in [0, 1]")
        return DisasterSchedule(form="table", table=vals)

    @staticmethod
    def c_over_k(c: float) -> "DisasterSchedule":
        if c < 0:
            raise ConfigError(f"c/k schedule needs c >= 0, got {c}")
        return DisasterSchedule(form="c_over_k", c=float(c))

    @staticmethod
    def constant(c: float) -> "DisasterSchedule":
        if not 0.0 <= c <= 1.0:
            raise ConfigError(f"constant disaster probability must lie in [0, 1], got {c}")
        return DisasterSchedule(form="constant", c=float(c))

    def prob(self, generation: int) -> float:
        if generation < 1:
            raise ValueError(f"generation must be >= 1, got {generation}")
        if self.form == "table":
            return self.table[generation - 1] if generation <= len(self.table) else 0.0
        if self.form == "c_over_k":
            return min(1.0, self.c / generation)
        return self.c


@dataclass(frozen=True)
class TruncationAsAbsorption:
    """Absorb the overshoot above g(n): A_n(l) = max(l - g(n), 0)."""

    g: GrowthFunction


@dataclass(frozen=True)
class Disaster:
    """With probability delta_n, absorb every particle this generation."""

    delta: DisasterSchedule


@dataclass(frozen=True)
class LowerBoundary:
    """Absorb everything once the offspring count drops below b(n)."""

    b: GrowthFunction


@dataclass(frozen=True, init=False)
class CustomAbsorption:
    """User rule mapping (offspring l, generation, history[, rng]) to an absorbed count.

    The rule sees a read-only copy of the trajectory so far and must return
    an integer in [0, l].  A rule that accepts four arguments also receives a
    dedicated random substream.
    """

    rule: Callable

    def __init__(self, rule: Callable):
        object.__setattr__(self, "rule", rule)
        try:
            n_params = len(inspect.signature(rule).parameters)
        except (TypeError, ValueError):
            n_params = 4
        if n_params not in (3, 4):
            raise ConfigError("custom absorbing rule must accept "
                              "(offspring, generation, history[, rng])")
        object.__setattr__(self, "_wants_rng", n_params == 4)


@dataclass(frozen=True)
class Truncation:
    """Cap generation n at g(n) before it reproduces."""

    g: GrowthFunction

    def __post_init__(self):
        if self.g(0) < 1:
            raise ConfigError(f"truncation function must satisfy g(0) >= 1, got {self.g(0)}")


@dataclass(frozen=True)
class Absorbing:
    """Remove A_n(l) of the l offspring according to an absorbing rule."""

    rule: object

    def __post_init__(self):
        kinds = (TruncationAsAbsorption, Disaster, LowerBoundary, CustomAbsorption)
        if not isinstance(self.rule, kinds):
            raise ConfigError(f"unknown absorbing rule {type(self.rule).__name__}")


@dataclass(frozen=True)
class Phi:
    """Let phi(current size) units reproduce each generation.

    phi(0) > 0 removes the absorbing state at 0 (immigration); runs under
    such a policy report extinction only as a zero count at the horizon.
    """

    phi: Callable[[int], int]

    def __post_init__(self):
        for x in (0, 1, 2, 5, 64):
            v = self.phi(x)
            if v < 0 or int(v) != v:
                raise ConfigError(f"phi({x}) = {v!r}; phi must map nonnegative "
                                  "integers to nonnegative integers")

    @property
    def revives_zero(self) -> bool:
        return self.phi(0) > 0


ControlPolicy = Truncation | Absorbing | Phi


def apply_truncation(offspring: int, generation: int, g) -> int:
    """Cap the offspring count at g(generation)."""
    if generation < 1:
        raise ValueError(f"generation must be >= 1, got {generation}")
    return min(int(g(generation)), offspring)


def apply_absorption(offspring: int, generation: int, rule, history, rng) -> int:
    """Return offspring minus the absorbed count A_n(offspring) in [0, offspring]."""
    if generation < 1:
        raise ValueError(f"generation must be >= 1, got {generation}")
    if isinstance(rule, TruncationAsAbsorption):
        absorbed = max(offspring - int(rule.g(generation)), 0)
        return offspring - absorbed
    if isinstance(rule, Disaster):
        # one uniform per generation, independent of the population history
        return 0 if rng.random() < rule.delta.prob(generation) else offspring
    if isinstance(rule, LowerBoundary):
        return 0 if offspring < int(rule.b(generation)) else offspring
    if isinstance(rule, CustomAbsorption):
        view = _history_view(history, generation)
        if rule._wants_rng:
            absorbed = rule.rule(offspring, generation, view, rng)
        else:
            absorbed = rule.rule(offspring, generation, view)
        if int(absorbed) != absorbed or not 0 <= absorbed <= offspring:
            raise InvalidRuleError(
                f"custom rule returned {absorbed!r} for offspring={offspring} "
                f"at generation {generation}; expected an integer in [0, {offspring}]"
            )
        return offspring - int(absorbed)
    raise ConfigError(f"unknown absorbing rule {type(rule).__name__}")


def _history_view(history, generation: int) -> tuple[int, ...]:
    counts = getattr(history, "counts", history)
    if counts is None:
        return ()
    return tuple(counts[:generation])


def apply_phi(state: int, phi, law, rng) -> int:
    """Total offspring of phi(state) reproducing units."""
    from .engine import sample_offspring_total

    units = int(phi(state))
    if units < 0:
        raise ConfigError(f"phi({state}) = {units}; phi must be nonnegative")
    return sample_offspring_total(law, units, rng)


@dataclass(frozen=True)
class CriterionVerdict:
    """Outcome of a series divergence test.

    ``partial_sums[i]`` is the sum of the first i + 1 terms base^g(n),
    n = 1 .. n_max.  ``method`` is "exact" for symbolic growth functions and
    "heuristic" otherwise; the heuristic fits the decay exponent of the terms
    against n over the top decade and leaves a dead band of width
    CLASSIFY_EPS around 1.
    """

    verdict: str
    partial_sums: np.ndarray = field(repr=False)
    fitted_decay_exponent: float | None
    method: str


def _series_verdict(base: float, g, n_max: int) -> CriterionVerdict:
    n = np.arange(1, n_max + 1)
    gn = np.array([g(int(i)) for i in n], dtype=np.float64)
    terms = base**gn
    partial_sums = np.cumsum(terms)

    symbolic = isinstance(g, GrowthFunction) and g.symbolic
    if symbolic:
        if g.form == "constant":
            verdict = "Divergent"  # constant positive terms
        elif g.form == "log":
            # terms are base^(rounded a*log_b(n+1)) ~ (n+1)^(-alpha); rounding
            # shifts them by at most a constant factor either way, so the
            # series converges iff alpha > 1
            alpha = g.a * math.log(1.0 / base) / math.log(g.base)
            verdict = "Convergent" if alpha > 1.0 else "Divergent"
        else:  # linear
            verdict = "Convergent" if g.a > 0 else "Divergent"
        return CriterionVerdict(verdict=verdict, partial_sums=partial_sums,
                                fitted_decay_exponent=None, method="exact")

    lo = max(n_max // 10, 1)
    window = terms[lo - 1:]
    ns = n[lo - 1:].astype(np.float64)
    if np.all(window <= 0.0):
        # terms underflowed: they decay faster than any power in view
        return CriterionVerdict(verdict="Convergent", partial_sums=partial_sums,
                                fitted_decay_exponent=None, method="heuristic")
    keep = window > 0.0
    slope = np.polyfit(np.log(ns[keep]), np.log(window[keep]), 1)[0]
    alpha_hat = -float(slope)
    if alpha_hat < 1.0 - CLASSIFY_EPS:
        verdict = "Divergent"
    elif alpha_hat > 1.0 + CLASSIFY_EPS:
        verdict = "Convergent"
    else:
        verdict = "Inconclusive"
    return CriterionVerdict(verdict=verdict, partial_sums=partial_sums,
                            fitted_decay_exponent=alpha_hat, method="heuristic")


def zubkov_criterion(q: float, g, n_max: int = 10_000) -> CriterionVerdict:
    """Classify sum_n q^g(n): Divergent means the truncated process dies a.s.

    q must be the extinction probability of the untruncated law, strictly
    inside (0, 1).
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie strictly inside (0, 1), got {q}")
    if n_max < 100:
        raise ValueError(f"n_max must be at least 100, got {n_max}")
    return _series_verdict(q, g, n_max)


def expectation_criterion(p: float, g, n_max: int = 10_000,
                          q: float | None = None) -> CriterionVerdict:
    """Classify sum_n p^g(n) for an absorbing process whose conditional mean
    is enveloped by g.

    A Divergent verdict certifies the sufficient condition for almost-sure
    extinction.  The sum increases in p, so p = q is the sharpest admissible
    choice; pass p=None with q set to use it.
    """
    if p is None:
        if q is None:
            raise ValueError("either p or q must be given")
        p = q
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie strictly inside (0, 1), got {p}")
    if q is not None and p > q:
        raise ValueError(f"p must not exceed q, got p={p} > q={q}")
    if n_max < 100:
        raise ValueError(f"n_max must be at least 100, got {n_max}")
    return _series_verdict(p, g, n_max)
