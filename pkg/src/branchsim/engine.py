"""Core simulation: offspring-sum sampling, trajectory stepping, Monte Carlo batches.

Population counts are Python integers, so runs may exceed 2^63 when the
configured cap allows it.  Offspring sums are drawn from exact closed-form
equivalents (Poisson, negative binomial, binomial, multinomial) in parent
blocks small enough that every underlying numpy draw stays safely inside
int64.  A per-particle inverse-CDF mode exists for monotone coupling: with
generation-keyed streams, the draw for parent i is the same in two runs, so
the offspring total is nondecreasing in the parent count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .control import Absorbing, CustomAbsorption, Phi, Truncation, apply_absorption
from .errors import BatchTrialError, BranchsimError, ConfigError, PopulationOverflow
from .law import Binomial, ExplicitPmf, Geometric, OffspringLaw, Poisson
from .rng import TrialStreams

DEFAULT_POPULATION_CAP = 1 << 48

# Largest parent block handed to one numpy draw.  Blocks must be exactly
# representable as float64 (<= 2^53) and keep block * mean well under 2^63.
_MAX_BLOCK = 1 << 53
_MEAN_BUDGET = 1 << 61
_SLAB = 1 << 20  # numpy draws per vectorized slab when many blocks are needed

HORIZON_NOTE = ("trajectories alive at the horizon count as surviving; "
                "the extinction fraction therefore underestimates the "
                "limiting extinction probability")


def _block_size(law: OffspringLaw) -> int:
    m = law.mean()
    block = _MAX_BLOCK
    if m > 1.0:
        block = min(block, int(_MEAN_BUDGET / m))
    mk = law.max_k()
    if mk is not None and mk > 0:
        block = min(block, _MEAN_BUDGET // mk)
    if isinstance(law, Binomial):
        block = min(block, _MEAN_BUDGET // law.n)
    return max(block, 1)


def _make_block_draw(law: OffspringLaw):
    """Return fn(z, rng) -> int for z <= block size, plus the block size."""
    if isinstance(law, Poisson):
        lam = law.lam

        def draw(z, rng):
            return int(rng.poisson(z * lam))

        def draw_many(z, size, rng):
            return rng.poisson(z * lam, size=size)

    elif isinstance(law, Geometric):
        p_success = 1.0 - law.r

        def draw(z, rng):
            return int(rng.negative_binomial(z, p_success))

        def draw_many(z, size, rng):
            return rng.negative_binomial(z, p_success, size=size)

    elif isinstance(law, Binomial):
        n, p = law.n, law.p

        def draw(z, rng):
            return int(rng.binomial(z * n, p))

        def draw_many(z, size, rng):
            return rng.binomial(z * n, p, size=size)

    elif isinstance(law, ExplicitPmf):
        ks_np, ps = law.pmf_table()
        ks = [int(k) for k in ks_np]
        pvals = ps.astype(np.float64).copy()
        # multinomial rejects pvals whose head sums a few ulp above 1
        pvals[-1] = max(0.0, 1.0 - pvals[:-1].sum())
        if len(ks) == 1:
            k0 = ks[0]

            def draw(z, rng):
                return k0 * z

            def draw_many(z, size, rng):
                return np.full(size, k0 * z, dtype=np.int64)

        elif len(ks) == 2:
            # a two-atom pmf needs only one binomial count
            k_lo, k_hi = ks
            p_hi = float(pvals[1])

            def draw(z, rng):
                n_hi = int(rng.binomial(z, p_hi))
                return k_lo * (z - n_hi) + k_hi * n_hi

            def draw_many(z, size, rng):
                n_hi = rng.binomial(z, p_hi, size=size)
                return k_lo * z + (k_hi - k_lo) * n_hi

        else:

            def draw(z, rng):
                return int(rng.multinomial(z, pvals) @ ks_np)

            def draw_many(z, size, rng):
                return rng.multinomial(z, pvals, size=size) @ ks_np

    else:
        raise ConfigError(f"no sampler for law kind {law.kind!r}")
    return draw, draw_many


@lru_cache(maxsize=256)
def _make_total_sampler(law: OffspringLaw, population_cap: int, per_particle: bool):
    """Build fn(z, rng) -> int distributed as the sum of z draws from law."""
    if per_particle:
        ks, ps = law.pmf_table()
        cdf = np.cumsum(ps)
        top = len(ks) - 1

        def sample(z, rng):
            if z == 0:
                return 0
            if z > population_cap:
                raise PopulationOverflow(f"parent count {z} exceeds cap {population_cap}")
            total = 0
            done = 0
            while done < z:
                take = min(z - done, _SLAB)
                idx = np.searchsorted(cdf, rng.random(take), side="right")
                if top == 0:
                    total += int(ks[0]) * take
                else:
                    np.minimum(idx, top, out=idx)  # residual tail mass maps to the last atom
                    total += int(ks[idx].sum())
                done += take
                if total > population_cap:
                    raise PopulationOverflow(f"offspring total exceeded cap {population_cap}")
            return total

        return sample

    block = _block_size(law)
    draw, draw_many = _make_block_draw(law)

    def sample(z, rng):
        if z == 0:
            return 0
        if z > population_cap:
            raise PopulationOverflow(f"parent count {z} exceeds cap {population_cap}")
        if z <= block:
            total = draw(z, rng)
        else:
            full, rem = divmod(z, block)
            total = draw(rem, rng) if rem else 0
            while full > 0:
                take = min(full, _SLAB)
                total += sum(draw_many(block, int(take), rng).tolist())
                full -= take
                if total > population_cap:
                    raise PopulationOverflow(f"offspring total exceeded cap {population_cap}")
        if total > population_cap:
            raise PopulationOverflow(f"offspring total {total} exceeds cap {population_cap}")
        return total

    return sample


def sample_offspring_total(law: OffspringLaw, z: int, rng,
                           population_cap: int = DEFAULT_POPULATION_CAP,
                           per_particle: bool = False) -> int:
    """Total offspring of z independent parents drawn from the law.

    ``rng`` is a numpy Generator.  Raises PopulationOverflow when the total
    (or the parent count itself) exceeds ``population_cap``.
    """
    if z < 0:
        raise ValueError(f"parent count must be nonnegative, got {z}")
    return _make_total_sampler(law, population_cap, per_particle)(int(z), rng)


def sample_offspring_totals(law: OffspringLaw, z: int, size: int, rng,
                            population_cap: int = DEFAULT_POPULATION_CAP) -> np.ndarray:
    """Vector of ``size`` independent copies of the z-parent offspring total.

    Intended for estimators with moderate z; z must fit into one sampling
    block so each total is a single int64-safe draw.
    """
    if z < 0:
        raise ValueError(f"parent count must be nonnegative, got {z}")
    if size < 0:
        raise ValueError(f"size must be nonnegative, got {size}")
    if z == 0:
        return np.zeros(size, dtype=np.int64)
    if z > _block_size(law):
        raise ValueError(f"parent count {z} too large for vectorized sampling")
    _, draw_many = _make_block_draw(law)
    totals = np.asarray(draw_many(z, size, rng), dtype=np.int64)
    if totals.size and int(totals.max()) > population_cap:
        raise PopulationOverflow(f"offspring total exceeds cap {population_cap}")
    return totals


@dataclass
class Trajectory:
    """Generation-indexed population counts with absorption metadata.

    counts[0] is the initial size and len(counts) == horizon + 1; once a
    count hits 0 the remaining entries are 0.  ``absorbed_at`` is the first
    zero generation, and stays None for policies that can revive from 0
    (phi with phi(0) > 0), where only a zero count at the horizon is treated
    as extinction.
    """

    counts: list[int]
    absorbed_at: int | None
    horizon: int

    @property
    def final(self) -> int:
        return self.counts[-1]

    def extinction_generation(self) -> int | None:
        """First generation counted as extinct, or None if surviving."""
        if self.absorbed_at is not None:
            return self.absorbed_at
        if self.counts[-1] == 0:
            return self.horizon
        return None


def _make_stepper(law, policy, population_cap, per_particle):
    """Return (advance(z, n, streams, counts) -> int, needs_history)."""
    draw = _make_total_sampler(law, population_cap, per_particle)
    if policy is None:
        def advance(z, n, streams, counts):
            return draw(z, streams.offspring(n))
        return advance, False
    if isinstance(policy, Truncation):
        g = policy.g
        g_memo = {}

        def advance(z, n, streams, counts):
            offspring = draw(z, streams.offspring(n))
            cap = g_memo.get(n)
            if cap is None:
                cap = g_memo[n] = int(g(n))
            return cap if offspring > cap else offspring
        return advance, False
    if isinstance(policy, Absorbing):
        rule = policy.rule

        def advance(z, n, streams, counts):
            offspring = draw(z, streams.offspring(n))
            return apply_absorption(offspring, n, rule, counts, streams.control(n))
        return advance, isinstance(rule, CustomAbsorption)
    if isinstance(policy, Phi):
        phi = policy.phi

        def advance(z, n, streams, counts):
            return draw(int(phi(z)), streams.offspring(n))
        return advance, False
    raise ConfigError(f"unknown control policy {type(policy).__name__}")


def step(state: int, law: OffspringLaw, policy, generation: int, history, rng,
         population_cap: int = DEFAULT_POPULATION_CAP, per_particle: bool = False) -> int:
    """Advance one generation from ``state`` under the optional policy.

    ``rng`` is a TrialStreams bundle; ``history`` (a Trajectory, or any
    object with a ``counts`` list) is consulted only by custom absorbing
    rules.  Without a policy this is just the offspring total of ``state``
    parents.
    """
    if generation < 1:
        raise ValueError(f"generation must be >= 1, got {generation}")
    if state < 0:
        raise ValueError(f"state must be nonnegative, got {state}")
    advance, _ = _make_stepper(law, policy, population_cap, per_particle)
    counts = getattr(history, "counts", history)
    return advance(state, generation, rng, counts)


def simulate_trajectory(law: OffspringLaw, policy, horizon: int, streams: TrialStreams,
                        initial_size: int = 1,
                        population_cap: int = DEFAULT_POPULATION_CAP,
                        per_particle: bool = False) -> Trajectory:
    """Run one trajectory to the horizon (or to absorption)."""
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    if initial_size < 0 or initial_size > population_cap:
        raise ConfigError(f"initial size {initial_size} outside [0, cap]")
    advance, _ = _make_stepper(law, policy, population_cap, per_particle)
    revive = isinstance(policy, Phi) and policy.revives_zero

    z = initial_size
    counts = [z]
    absorbed = None
    if z == 0 and not revive:
        absorbed = 0
    else:
        for n in range(1, horizon + 1):
            z = advance(z, n, streams, counts)
            counts.append(z)
            if z == 0 and not revive:
                absorbed = n
                break
    if len(counts) < horizon + 1:
        counts.extend([0] * (horizon + 1 - len(counts)))
    return Trajectory(counts=counts, absorbed_at=absorbed, horizon=horizon)


@dataclass
class BatchResult:
    """Aggregates over a batch of independent trajectories.

    ``extinction_generations[i]`` is the generation at which trial i was
    first counted extinct, or -1 if it survived to the horizon.  Counts are
    exact integers, so identical configs reproduce identical results no
    matter how trials were scheduled.
    """

    trials: int
    horizon: int
    extinct_by_horizon: int
    extinction_fraction: float
    mean_final_size_given_survival: float
    per_generation_extinct_counts: np.ndarray = field(repr=False)
    per_generation_alive_counts: np.ndarray = field(repr=False)
    per_generation_alive_size_sums: list = field(repr=False)
    extinction_generations: np.ndarray = field(repr=False)
    sampled_trajectories: list = field(repr=False)
    failed_trials: list = field(repr=False)
    horizon_note: str = HORIZON_NOTE


def _run_block(lo, hi, horizon, seed, initial, coupled, n_sample,
               advance, needs_history, revive):
    eg = np.full(hi - lo, -1, dtype=np.int64)
    alive_counts = [0] * (horizon + 1)
    alive_sums = [0] * (horizon + 1)
    survivors = 0
    survivor_size_sum = 0
    sampled = []
    failures = []
    for t in range(lo, hi):
        streams = TrialStreams(seed, t, coupled)
        track = needs_history or t < n_sample
        z = initial
        counts = [z] if track else None
        # alive-population marks are applied only if the trial completes, so
        # a failed trial contributes to no aggregate at all
        marks = [(0, z)] if z > 0 else []
        eg_t = 0 if (z == 0 and not revive) else -1
        try:
            if eg_t != 0:
                for n in range(1, horizon + 1):
                    z = advance(z, n, streams, counts)
                    if track:
                        counts.append(z)
                    if z:
                        marks.append((n, z))
                    elif not revive:
                        eg_t = n
                        break
                if revive and z == 0:
                    eg_t = horizon
        except BranchsimError as exc:
            failures.append(BatchTrialError(t, exc))
            eg[t - lo] = -1
            continue
        eg[t - lo] = eg_t
        for n, zn in marks:
            alive_counts[n] += 1
            alive_sums[n] += zn
        if z > 0:
            survivors += 1
            survivor_size_sum += z
        if t < n_sample:
            if len(counts) < horizon + 1:
                counts.extend([0] * (horizon + 1 - len(counts)))
            absorbed = eg_t if (eg_t >= 0 and not revive) else None
            sampled.append((t, Trajectory(counts=counts, absorbed_at=absorbed,
                                          horizon=horizon)))
    return (eg, alive_counts, alive_sums, survivors, survivor_size_sum,
            sampled, failures)


def run_batch(config, threads: int = 1) -> BatchResult:
    """Run ``config.trials`` independent trajectories and aggregate them.

    Per-trial substreams make the result a pure function of the config;
    ``threads`` splits trials into contiguous blocks and never changes any
    output.  Trial failures beyond ``config.failure_budget`` abort the batch.
    """
    law = config.law
    policy = getattr(config, "policy", None)
    horizon = int(config.horizon)
    trials = int(config.trials)
    seed = int(config.master_seed)
    initial = int(getattr(config, "initial_size", 1))
    cap = int(getattr(config, "population_cap", DEFAULT_POPULATION_CAP))
    coupled = bool(getattr(config, "coupled", False))
    n_sample = int(getattr(config, "sample_trajectories", 0))
    budget = int(getattr(config, "failure_budget", 0))
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    if initial < 0 or initial > cap:
        raise ConfigError(f"initial size {initial} outside [0, cap]")

    advance, needs_history = _make_stepper(law, policy, cap, coupled)
    revive = isinstance(policy, Phi) and policy.revives_zero

    threads = max(1, int(threads))
    n_blocks = min(threads, trials)
    bounds = [trials * i // n_blocks for i in range(n_blocks + 1)]
    args = [(bounds[i], bounds[i + 1], horizon, seed, initial, coupled,
             n_sample, advance, needs_history, revive)
            for i in range(n_blocks)]
    if n_blocks == 1:
        results = [_run_block(*args[0])]
    else:
        with ThreadPoolExecutor(max_workers=n_blocks) as pool:
            results = list(pool.map(lambda a: _run_block(*a), args))

    eg = np.concatenate([r[0] for r in results])
    alive_counts = np.zeros(horizon + 1, dtype=np.int64)
    alive_sums = [0] * (horizon + 1)
    survivors = 0
    survivor_size_sum = 0
    sampled = []
    failures = []
    for r in results:
        alive_counts += np.asarray(r[1], dtype=np.int64)
        for n, v in enumerate(r[2]):
            alive_sums[n] += v
        survivors += r[3]
        survivor_size_sum += r[4]
        sampled.extend(r[5])
        failures.extend(r[6])

    if len(failures) > budget:
        raise failures[0]
    failed_idx = sorted(f.trial_index for f in failures)
    if failed_idx:
        ok = np.ones(trials, dtype=bool)
        ok[failed_idx] = False
        eg = eg[ok]
    n_ok = trials - len(failed_idx)

    extinct_mask = eg >= 0
    bc = np.bincount(eg[extinct_mask], minlength=horizon + 1)
    extinct_counts = np.cumsum(bc[:horizon + 1])
    extinct = int(extinct_mask.sum())
    mean_final = survivor_size_sum / survivors if survivors else math.nan
    sampled.sort(key=lambda pair: pair[0])
    return BatchResult(
        trials=n_ok,
        horizon=horizon,
        extinct_by_horizon=extinct,
        extinction_fraction=extinct / n_ok if n_ok else math.nan,
        mean_final_size_given_survival=mean_final,
        per_generation_extinct_counts=extinct_counts,
        per_generation_alive_counts=alive_counts,
        per_generation_alive_size_sums=alive_sums,
        extinction_generations=eg,
        sampled_trajectories=[traj for _, traj in sampled],
        failed_trials=sorted(failures, key=lambda f: f.trial_index),
    )
