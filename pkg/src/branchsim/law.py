"""Offspring laws: pmf tables, generating functions, means, extinction probability.

The extinction probability of a branching process driven by a law with pgf f
is the smallest fixed point of f on [0, 1].  It is found by monotone
fixed-point iteration from 0, with a bisection fallback for laws where the
iteration converges too slowly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError, NumericFailure

TAIL_EPS = 1e-15  # pmf tables drop a tail of at most this mass
CRITICAL_EPS = 1e-9  # |m - 1| below this is treated as critical
PMF_SUM_TOL = 1e-12


@dataclass(frozen=True)
class ExtinctionResult:
    """Extinction probability with solver diagnostics.

    ``critical`` is set when the law sits numerically on the m = 1 boundary
    (or when the root is indistinguishable from 1), in which case q = 1 is
    reported directly.
    """

    q: float
    iterations: int
    residual: float
    critical: bool = False


class OffspringLaw:
    """Base class for offspring distributions.

    Subclasses provide the exact pgf and mean in closed form plus a pmf table
    truncated so the dropped tail mass is below ``TAIL_EPS``.  Instances are
    immutable and safe to share across workers.
    """

    kind: str = "abstract"

    def pgf(self, s: float) -> float:
        """Evaluate f(s) = sum_k p_k s^k for s in [0, 1]."""
        s = float(s)
        if math.isnan(s) or not 0.0 <= s <= 1.0:
            raise ValueError(f"pgf argument must lie in [0, 1], got {s}")
        return float(self._pgf(s))

    def _pgf(self, s: float) -> float:
        raise NotImplementedError

    def mean(self) -> float:
        """Reproduction mean m = sum_k k p_k."""
        raise NotImplementedError

    def max_k(self) -> int | None:
        """Largest support point, or None for infinite support."""
        raise NotImplementedError

    def pmf_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Support points and probabilities (tail below TAIL_EPS dropped)."""
        raise NotImplementedError

    @property
    def p0(self) -> float:
        ks, ps = self.pmf_table()
        return float(ps[0]) if ks.size and ks[0] == 0 else 0.0


@dataclass(frozen=True, init=False)
class ExplicitPmf(OffspringLaw):
    """Finite-support law given by weights on nonnegative integers.

    Accepts a mapping k -> weight or an iterable of (k, weight) pairs; the
    weights are normalized to sum to 1.
    """

    atoms: tuple[tuple[int, float], ...]

    kind = "explicit_pmf"

    def __init__(self, pmf):
        pairs = pmf.items() if isinstance(pmf, dict) else list(pmf)
        seen: dict[int, float] = {}
        for k, w in pairs:
            ki = int(k)
            wf = float(w)
            if ki < 0 or ki != k:
                raise ConfigError(f"support points must be nonnegative integers, got {k}")
            if not math.isfinite(wf) or wf < 0:
                raise ConfigError(f"weight for k={ki} must be finite and nonnegative, got {w}")
            if ki in seen:
                raise ConfigError(f"duplicate support point k={ki}")
            seen[ki] = wf
        total = math.fsum(seen.values())
        if not seen or total <= 0:
            raise ConfigError("pmf must carry positive total weight")
        atoms = tuple((k, w / total) for k, w in sorted(seen.items()) if w > 0)
        object.__setattr__(self, "atoms", atoms)

    def _pgf(self, s: float) -> float:
        return math.fsum(p * s**k for k, p in self.atoms)

    def mean(self) -> float:
        return math.fsum(k * p for k, p in self.atoms)

    def max_k(self) -> int:
        return self.atoms[-1][0]

    @cached_property
    def _table(self) -> tuple[np.ndarray, np.ndarray]:
        ks = np.array([k for k, _ in self.atoms], dtype=np.int64)
        ps = np.array([p for _, p in self.atoms], dtype=np.float64)
        return ks, ps

    def pmf_table(self) -> tuple[np.ndarray, np.ndarray]:
        return self._table


@dataclass(frozen=True)
class Poisson(OffspringLaw):
    """Poisson offspring with rate lam."""

    lam: float

    kind = "poisson"

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ConfigError(f"Poisson rate must be positive and finite, got {self.lam}")

    def _pgf(self, s: float) -> float:
        return math.exp(self.lam * (s - 1.0))

    def mean(self) -> float:
        return self.lam

    def max_k(self) -> None:
        return None

    @cached_property
    def _table(self) -> tuple[np.ndarray, np.ndarray]:
        probs = []
        p = math.exp(-self.lam)
        cum = 0.0
        k = 0
        while cum < 1.0 - TAIL_EPS:
            probs.append(p)
            cum += p
            k += 1
            p *= self.lam / k
            if k > 100_000:  # unreachable for sane rates; guards nonterminating loops
                break
        return np.arange(len(probs), dtype=np.int64), np.array(probs)

    def pmf_table(self) -> tuple[np.ndarray, np.ndarray]:
        return self._table


@dataclass(frozen=True)
class Geometric(OffspringLaw):
    """Geometric offspring with pmf p_k = (1 - r) r^k on k = 0, 1, 2, ..."""

    r: float

    kind = "geometric"

    def __post_init__(self):
        if not (0.0 < self.r < 1.0):
            raise ConfigError(f"Geometric parameter must lie in (0, 1), got {self.r}")

    def _pgf(self, s: float) -> float:
        return (1.0 - self.r) / (1.0 - self.r * s)

    def mean(self) -> float:
        return self.r / (1.0 - self.r)

    def max_k(self) -> None:
        return None

    @cached_property
    def _table(self) -> tuple[np.ndarray, np.ndarray]:
        # tail mass beyond k_max is r^(k_max + 1)
        k_max = int(math.ceil(math.log(TAIL_EPS) / math.log(self.r)))
        ks = np.arange(k_max + 1, dtype=np.int64)
        ps = (1.0 - self.r) * self.r ** ks.astype(np.float64)
        return ks, ps

    def pmf_table(self) -> tuple[np.ndarray, np.ndarray]:
        return self._table


@dataclass(frozen=True)
class Binomial(OffspringLaw):
    """Binomial(n, p) offspring."""

    n: int
    p: float

    kind = "binomial"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"Binomial count must be a positive integer, got {self.n}")
        if not (0.0 < self.p < 1.0):
            raise ConfigError(f"Binomial probability must lie in (0, 1), got {self.p}")
        object.__setattr__(self, "n", int(self.n))

    def _pgf(self, s: float) -> float:
        return (1.0 - self.p + self.p * s) ** self.n

    def mean(self) -> float:
        return self.n * self.p

    def max_k(self) -> int:
        return self.n

    @cached_property
    def _table(self) -> tuple[np.ndarray, np.ndarray]:
        probs = np.empty(self.n + 1)
        probs[0] = (1.0 - self.p) ** self.n
        ratio = self.p / (1.0 - self.p)
        for k in range(self.n):
            probs[k + 1] = probs[k] * (self.n - k) / (k + 1) * ratio
        return np.arange(self.n + 1, dtype=np.int64), probs

    def pmf_table(self) -> tuple[np.ndarray, np.ndarray]:
        return self._table


def pgf(law: OffspringLaw, s: float) -> float:
    """Evaluate the law's probability generating function at s."""
    return law.pgf(s)


def mean(law: OffspringLaw) -> float:
    """Reproduction mean of the law."""
    return law.mean()


def extinction_probability(law: OffspringLaw, tol: float = 1e-12,
                           max_iterations: int = 200_000) -> ExtinctionResult:
    """Smallest root of pgf(s) = s on [0, 1].

    Iterates s <- f(s) from 0, which increases monotonically to the smallest
    fixed point.  If the iteration has not met ``tol`` within
    ``max_iterations`` (near-critical laws converge logarithmically slowly),
    a bracketing bisection on f(s) - s finishes the job.
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    m = law.mean()
    if abs(m - 1.0) < CRITICAL_EPS:
        return ExtinctionResult(q=1.0, iterations=0, residual=0.0, critical=True)
    if m < 1.0:
        return ExtinctionResult(q=1.0, iterations=0, residual=0.0)

    s = 0.0
    iterations = 0
    for _ in range(max_iterations):
        iterations += 1
        fs = law.pgf(s)
        residual = fs - s
        if residual <= tol:
            return ExtinctionResult(q=s, iterations=iterations, residual=residual)
        s = fs

    # Stalled short of tol: bracket the root above the current iterate.
    # f(x) - x stays positive below the smallest root and is negative just
    # under 1 for supercritical laws, so halving the gap to 1 finds a sign
    # change unless the root is within float distance of 1.
    lo, hi = s, None
    gap = 1.0 - s
    for j in range(1, 64):
        x = 1.0 - gap * 0.5**j
        if law.pgf(x) - x < 0.0:
            hi = x
            break
        lo = x
    if hi is None:
        return ExtinctionResult(q=1.0, iterations=iterations, residual=0.0, critical=True)
    for _ in range(500):
        iterations += 1
        mid = 0.5 * (lo + hi)
        residual = law.pgf(mid) - mid
        if abs(residual) <= tol:
            return ExtinctionResult(q=mid, iterations=iterations, residual=abs(residual))
        if residual > 0.0:
            lo = mid
        else:
            hi = mid
    raise NumericFailure(
        f"extinction probability solver did not reach tol={tol} "
        f"after {iterations} iterations (law={law.kind})"
    )
