"""Order-statistic stopping times under a budget and their expectation bound.

Given n positive claims and a budget s, the stopping time N(n, s) is the
number of claims that fit the budget when served smallest first.  Its
expectation is bounded by sum_i n_i * F_i(t), where the threshold t solves
sum_i n_i * integral_0^t x dF_i(x) = s.  The bound needs no independence
between claims, so the estimator offers both independent and comonotone
sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BudgetExceedsMass, ConfigError, NumericFailure

Z99 = 2.5758293035489004  # two-sided 99% normal quantile


class ClaimDistribution:
    """Absolutely continuous claim distribution on (0, inf).

    Subclasses provide the cdf F, the partial mean PM(t) = integral_0^t x dF,
    the total mean (may be inf), a quantile function, and vectorized
    sampling.
    """

    kind: str = "abstract"

    def cdf(self, t: float) -> float:
        raise NotImplementedError

    def partial_mean(self, t: float) -> float:
        raise NotImplementedError

    @property
    def mean(self) -> float:
        raise NotImplementedError

    def ppf(self, u):
        raise NotImplementedError

    def sample(self, rng, size) -> np.ndarray:
        return self.ppf(rng.random(size))


@dataclass(frozen=True)
class Uniform(ClaimDistribution):
    """Uniform claims on (0, b)."""

    b: float

    kind = "uniform"

    def __post_init__(self):
        if not (math.isfinite(self.b) and self.b > 0):
            raise ConfigError(f"uniform upper bound must be positive, got {self.b}")

    def cdf(self, t):
        return min(max(t / self.b, 0.0), 1.0)

    def partial_mean(self, t):
        if t <= 0.0:
            return 0.0
        return t * t / (2.0 * self.b) if t < self.b else self.b / 2.0

    @property
    def mean(self):
        return self.b / 2.0

    def ppf(self, u):
        return u * self.b


@dataclass(frozen=True)
class Exponential(ClaimDistribution):
    """Exponential claims with the given rate."""

    rate: float

    kind = "exponential"

    def __post_init__(self):
        if not (math.isfinite(self.rate) and self.rate > 0):
            raise ConfigError(f"exponential rate must be positive, got {self.rate}")

    def cdf(self, t):
        return -math.expm1(-self.rate * t) if t > 0.0 else 0.0

    def partial_mean(self, t):
        if t <= 0.0:
            return 0.0
        lt = self.rate * t
        return (1.0 - math.exp(-lt) * (1.0 + lt)) / self.rate

    @property
    def mean(self):
        return 1.0 / self.rate

    def ppf(self, u):
        return -np.log1p(-u) / self.rate


@dataclass(frozen=True, init=False)
class CustomClaim(ClaimDistribution):
    """Claim distribution given by user cdf and partial-mean callables.

    Registration cross-checks the pair on a grid: F must be a cdf starting
    at 0, PM must be nondecreasing from 0 with PM(t) <= t * F(t), and the
    finite-difference derivative of PM must match t * dF/dt, since a wrong
    partial mean silently corrupts the threshold equation.  A quantile
    function may be supplied; otherwise quantiles are found by bisection.
    """

    cdf_fn: Callable[[float], float]
    partial_mean_fn: Callable[[float], float]
    total_mean: float
    ppf_fn: Callable | None
    scale: float

    kind = "custom"

    def __init__(self, cdf, partial_mean, mean, ppf=None, scale: float = 1.0):
        object.__setattr__(self, "cdf_fn", cdf)
        object.__setattr__(self, "partial_mean_fn", partial_mean)
        object.__setattr__(self, "total_mean", float(mean))
        object.__setattr__(self, "ppf_fn", ppf)
        object.__setattr__(self, "scale", float(scale))
        if not self.total_mean > 0:
            raise ConfigError(f"claim mean must be positive, got {mean}")
        if self.scale <= 0:
            raise ConfigError(f"scale must be positive, got {scale}")
        self._validate()

    def _validate(self):
        if abs(self.cdf_fn(0.0)) > 1e-9 or abs(self.partial_mean_fn(0.0)) > 1e-9:
            raise ConfigError("claim cdf and partial mean must vanish at 0")
        grid = self.scale * np.geomspace(1e-3, 1e3, 61)
        prev_f = 0.0
        prev_pm = 0.0
        for t in grid:
            f = self.cdf_fn(t)
            pm = self.partial_mean_fn(t)
            if f < prev_f - 1e-9 or not 0.0 <= f <= 1.0 + 1e-9:
                raise ConfigError(f"cdf is not a nondecreasing [0, 1] function at t={t}")
            if pm < prev_pm - 1e-9:
                raise ConfigError(f"partial mean decreases at t={t}")
            if pm > t * f + 1e-9 * max(1.0, t):
                raise ConfigError(f"partial mean exceeds t * F(t) at t={t}")
            prev_f, prev_pm = f, pm
        # PM'(t) = t F'(t): compare central differences where F is moving
        for t in self.scale * np.geomspace(1e-2, 1e2, 17):
            h = 1e-4 * t
            df = self.cdf_fn(t + h) - self.cdf_fn(t - h)
            dpm = self.partial_mean_fn(t + h) - self.partial_mean_fn(t - h)
            if df > 1e-6 and abs(dpm - t * df) > 0.02 * t * df + 1e-12:
                raise ConfigError(
                    f"partial mean is inconsistent with the cdf near t={t}: "
                    f"dPM={dpm:.6g} vs t*dF={t * df:.6g}")

    def cdf(self, t):
        return float(self.cdf_fn(t))

    def partial_mean(self, t):
        return float(self.partial_mean_fn(t))

    @property
    def mean(self):
        return self.total_mean

    def ppf(self, u):
        if self.ppf_fn is not None:
            return np.asarray(self.ppf_fn(u), dtype=np.float64)
        u = np.asarray(u, dtype=np.float64)
        lo = np.zeros_like(u)
        hi = np.full_like(u, self.scale)
        for _ in range(200):
            mask = np.array([self.cdf_fn(x) for x in hi]) < u
            if not mask.any():
                break
            hi[mask] *= 2.0
        else:
            raise NumericFailure("quantile bracket not found for custom claim")
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            fm = np.array([self.cdf_fn(x) for x in mid])
            below = fm < u
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)


@dataclass(frozen=True, init=False)
class Population:
    """Groups of claims sharing a distribution, plus the budget s."""

    groups: tuple[tuple[int, ClaimDistribution], ...]
    s: float

    def __init__(self, groups, s):
        parsed = []
        for count, dist in groups:
            if int(count) != count or count < 1:
                raise ConfigError(f"group count must be a positive integer, got {count}")
            if not isinstance(dist, ClaimDistribution):
                raise ConfigError(f"group distribution must be a ClaimDistribution, "
                                  f"got {type(dist).__name__}")
            parsed.append((int(count), dist))
        if not parsed:
            raise ConfigError("population needs at least one group")
        if not (math.isfinite(s) and s > 0):
            raise ConfigError(f"budget must be positive and finite, got {s}")
        object.__setattr__(self, "groups", tuple(parsed))
        object.__setattr__(self, "s", float(s))

    @property
    def total_count(self) -> int:
        return sum(count for count, _ in self.groups)


def stopping_time(claims, s: float) -> int:
    """Largest k such that the k smallest claims sum to at most s."""
    arr = np.asarray(claims, dtype=np.float64)
    if arr.size and float(arr.min()) <= 0.0:
        raise ValueError("claims must be strictly positive")
    if not s > 0.0:
        raise ValueError(f"budget must be positive, got {s}")
    prefix = np.cumsum(np.sort(arr))
    return int(np.count_nonzero(prefix <= s))


def _partial_mean_sum(pop: Population, t: float) -> float:
    return math.fsum(count * dist.partial_mean(t) for count, dist in pop.groups)


def solve_threshold(pop: Population, tol: float = 1e-10) -> float:
    """Root t of sum_i n_i * PM_i(t) = s, by bracketing bisection.

    Raises BudgetExceedsMass when the total expected claim mass is at most
    s, in which case the equation has no finite root and the stopping-time
    bound degenerates to the population size.
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    s = pop.s
    mass = math.fsum(count * dist.mean for count, dist in pop.groups)
    if mass <= s:
        raise BudgetExceedsMass(
            f"total expected claim mass {mass} is within the budget {s}; "
            f"the bound degenerates to n = {pop.total_count}")
    lo, hi = 0.0, 1.0
    for _ in range(1100):
        if _partial_mean_sum(pop, hi) >= s:
            break
        lo, hi = hi, hi * 2.0
    else:
        raise NumericFailure("could not bracket the threshold equation")
    for _ in range(500):
        mid = 0.5 * (lo + hi)
        value = _partial_mean_sum(pop, mid)
        if abs(value - s) <= tol * s:
            return mid
        if value < s:
            lo = mid
        else:
            hi = mid
    raise NumericFailure(f"threshold bisection did not reach tol={tol}")


def brs_bound(pop: Population, tol: float = 1e-10) -> float:
    """Upper bound sum_i n_i * F_i(t) on the expected stopping time."""
    try:
        t = solve_threshold(pop, tol)
    except BudgetExceedsMass:
        return float(pop.total_count)
    return math.fsum(count * dist.cdf(t) for count, dist in pop.groups)


@dataclass(frozen=True)
class StopEstimate:
    """Monte Carlo estimate of E[N(n, s)] with a 99% halfwidth."""

    mean: float
    halfwidth: float
    trials: int
    mode: str


def estimate_expected_stop(pop: Population, trials: int, rng,
                           mode: str = "independent") -> StopEstimate:
    """Monte Carlo mean of the stopping time over sampled claim vectors.

    ``independent`` draws every claim independently; ``comonotone`` drives
    all claims within a group by one shared uniform per trial, the extreme
    positive dependence.  The expectation bound holds for both.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if mode not in ("independent", "comonotone"):
        raise ValueError(f"unknown sampling mode {mode!r}")
    n = pop.total_count
    s = pop.s
    block_rows = max(1, min(trials, 4_000_000 // max(n, 1)))
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < trials:
        rows = min(block_rows, trials - done)
        cols = []
        for count, dist in pop.groups:
            if mode == "independent":
                cols.append(np.asarray(dist.ppf(rng.random((rows, count))),
                                       dtype=np.float64))
            else:
                u = rng.random((rows, 1))
                cols.append(np.broadcast_to(np.asarray(dist.ppf(u), dtype=np.float64),
                                            (rows, count)))
        claims = np.concatenate(cols, axis=1)
        prefix = np.cumsum(np.sort(claims, axis=1), axis=1)
        stops = (prefix <= s).sum(axis=1).astype(np.float64)
        total += float(stops.sum())
        total_sq += float((stops * stops).sum())
        done += rows
    mean = total / trials
    if trials > 1:
        var = max(0.0, (total_sq - trials * mean * mean) / (trials - 1))
    else:
        var = 0.0
    halfwidth = Z99 * math.sqrt(var / trials)
    return StopEstimate(mean=mean, halfwidth=halfwidth, trials=trials, mode=mode)
