"""Conditional series along nested extinction events: estimates and search."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import pytest

from branchsim import (
    ExplicitPmf,
    Geometric,
    GrowthFunction,
    Truncation,
    estimate_conditional_series,
    exact_partial_sum,
    run_batch,
    schedule_search,
)


@dataclass
class Batch:
    law: object
    horizon: int
    trials: int
    master_seed: int
    policy: object = None
    population_cap: int = 1 << 200


def chain_identity_holds(est):
    """1 - p_marginal[K] == prod(1 - p_conditional[k]) in exact arithmetic."""
    surv = Fraction(1)
    for k in range(len(est.schedule)):
        alive_prev = est.alive_counts[k]
        if alive_prev == 0:
            break
        extinct_prev = est.trials - alive_prev
        newly = est.extinct_counts[k] - extinct_prev
        surv *= Fraction(alive_prev - newly, alive_prev)
        lhs = Fraction(1) - Fraction(est.extinct_counts[k], est.trials)
        if lhs != surv:
            return False
    return True


# ------------------------------------------------------------- basic shapes

def test_instant_extinction_floods_the_first_term():
    eg = np.zeros(50, dtype=np.int64) + 1  # all extinct at generation 1
    est = estimate_conditional_series(eg, (1, 2, 3), horizon=10)
    assert est.p_marginal.tolist() == [1.0, 1.0, 1.0]
    assert est.p_conditional[0] == 1.0
    assert est.empty_conditioning.tolist() == [False, True, True]
    assert est.any_empty_conditioning
    assert math.isnan(est.p_conditional[1])
    assert est.partial_sums.tolist() == [1.0, 1.0, 1.0]  # NaN terms skipped


def test_immortal_trials_give_zero_series():
    eg = np.full(40, -1, dtype=np.int64)
    est = estimate_conditional_series(eg, tuple(range(1, 11)), horizon=20)
    assert np.all(est.p_marginal == 0.0)
    assert np.all(est.p_conditional == 0.0)
    assert np.all(est.partial_sums == 0.0)
    assert not est.any_empty_conditioning


def test_hand_computed_counts():
    # 10 trials: extinct at generations 1,1,2,3,5,5,-1 (x4 survivors)
    eg = np.array([1, 1, 2, 3, 5, 5, -1, -1, -1, -1], dtype=np.int64)
    est = estimate_conditional_series(eg, (1, 2, 4, 6), horizon=6)
    assert est.extinct_counts == (2, 3, 4, 6)
    assert est.alive_counts == (10, 8, 7, 6, 4)
    assert est.p_marginal.tolist() == [0.2, 0.3, 0.4, 0.6]
    assert est.p_conditional.tolist() == [2 / 10, 1 / 8, 1 / 7, 2 / 6]
    assert chain_identity_holds(est)
    expected = Fraction(2, 10) + Fraction(1, 8) + Fraction(1, 7) + Fraction(2, 6)
    assert exact_partial_sum(est) == expected


def test_schedule_validation():
    eg = np.array([1, -1], dtype=np.int64)
    with pytest.raises(ValueError):
        estimate_conditional_series(eg, (), horizon=5)
    with pytest.raises(ValueError):
        estimate_conditional_series(eg, (0, 1), horizon=5)
    with pytest.raises(ValueError):
        estimate_conditional_series(eg, (2, 2), horizon=5)
    with pytest.raises(ValueError):
        estimate_conditional_series(eg, (1, 9), horizon=5)
    with pytest.raises(ValueError):
        estimate_conditional_series(np.array([], dtype=np.int64), (1,), horizon=5)


def test_horizon_taken_from_batch():
    res = run_batch(Batch(Geometric(0.4), horizon=12, trials=100, master_seed=3))
    with pytest.raises(ValueError):
        estimate_conditional_series(res, (1, 13))
    est = estimate_conditional_series(res, (1, 12))
    assert est.schedule == (1, 12)


# -------------------------------------------------------------- invariants

def test_marginals_nondecreasing_and_chain_identity_on_batches():
    cases = [
        Batch(Geometric(0.4), horizon=40, trials=4000, master_seed=7),
        Batch(ExplicitPmf({0: 1 / 3, 2: 2 / 3}), horizon=64, trials=4000,
              master_seed=21),
        Batch(ExplicitPmf({0: 0.25, 2: 0.75}), horizon=128, trials=3000,
              master_seed=5, policy=Truncation(GrowthFunction.constant(3))),
    ]
    for cfg in cases:
        res = run_batch(cfg, threads=4)
        for schedule in ((1, 2, 4, 8, 16, 32), tuple(range(1, 33))):
            est = estimate_conditional_series(res, schedule)
            assert np.all(np.diff(est.p_marginal) >= 0.0)
            assert chain_identity_holds(est)
            float_sum = est.partial_sums[-1]
            assert float(exact_partial_sum(est)) == pytest.approx(float_sum,
                                                                  abs=1e-12)


def test_divergent_series_shows_no_plateau():
    """Under a cap of 3 the extinction probability is 1 and the conditional
    series keeps growing through the horizon."""
    cfg = Batch(ExplicitPmf({0: 0.25, 2: 0.75}), horizon=500, trials=10_000,
                master_seed=17, policy=Truncation(GrowthFunction.constant(3)))
    res = run_batch(cfg, threads=4)
    est = estimate_conditional_series(res, tuple(range(1, 501)))
    assert est.p_marginal[-1] >= 0.99
    sums = est.partial_sums
    assert sums[-1] > sums[len(sums) // 2] > sums[len(sums) // 4]


# ------------------------------------------------------------------ search

def test_search_prefers_linear_on_fast_extinction():
    eg = np.array([1] * 90 + [-1] * 10, dtype=np.int64)
    best = schedule_search(eg, max_points=4, horizon=100)
    assert best == (1, 2, 3, 4)


def test_search_tie_breaks_to_linear_when_immortal():
    eg = np.full(50, -1, dtype=np.int64)
    best = schedule_search(eg, max_points=5, horizon=100)
    assert best == (1, 2, 3, 4, 5)


def test_search_returns_argmax_over_families():
    res = run_batch(Batch(ExplicitPmf({0: 1 / 3, 2: 2 / 3}), horizon=64,
                          trials=20_000, master_seed=21))
    best = schedule_search(res, max_points=6)
    candidates = {
        "linear": (1, 2, 3, 4, 5, 6),
        "powers": (2, 4, 8, 16, 32, 64),
        "squares": (1, 4, 9, 16, 25, 36),
    }
    assert best in candidates.values()
    sums = {name: exact_partial_sum(estimate_conditional_series(res, s))
            for name, s in candidates.items()}
    best_sum = exact_partial_sum(estimate_conditional_series(res, best))
    assert best_sum == max(sums.values())
    assert best_sum >= sums["linear"]


def test_search_validates_arguments():
    eg = np.array([1, -1], dtype=np.int64)
    with pytest.raises(ValueError):
        schedule_search(eg, max_points=1, horizon=10)
    with pytest.raises(ValueError):
        schedule_search(eg, max_points=3)  # no horizon available
