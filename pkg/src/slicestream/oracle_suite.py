"""Random micro-instances comparing the CCP solver with exhaustive search."""
from __future__ import annotations

import numpy as np

from .model import RandomSource, ScenarioConfig, VideoCatalog
from .queueing import QueueState
from .scheduler import DppCoefficients, SlotConstraints, ccp_solve, compute_coefficients, oracle_solve

BASE_LEVELS = VideoCatalog().levels


def random_instance(rng: RandomSource, max_vehicles: int = 3, max_rbs: int = 3, max_levels: int = 3):
    """Coefficients of a small slot built from random queues and channels.

    With two or more vehicles the last one may be a free vehicle relayed by
    vehicle 0 over a separate SL pool, so both pool kinds get exercised.
    """
    V = int(rng.integers(1, max_vehicles + 1))
    M = int(rng.integers(1, max_rbs + 1))
    J = int(rng.integers(1, max_levels + 1))
    catalog = VideoCatalog(BASE_LEVELS[:J])
    cfg = ScenarioConfig(
        num_rbs_rsu=M,
        num_rbs_sl=M,
        epsilon=float(rng.choice([0.1, 0.01])),
        eta=float(10.0 ** rng.uniform(5.0, 14.0)),
    )
    state = QueueState.initial(V, cfg, catalog)
    q0 = state.q_b0
    q_b = q0 * rng.uniform(0.0, 1.5, V) * (rng.random(V) < 0.8)
    relayed = V >= 2 and rng.random() < 0.4
    free_mask = np.zeros(V, dtype=bool)
    if relayed:
        free_mask[-1] = True
    q_s = np.where(free_mask, q0 * rng.uniform(0.0, 0.5, V), 0.0)
    vq = q0 * rng.uniform(0.0, 2.0, V) * (rng.random(V) < 0.5)
    z_av = np.cumprod(rng.uniform(0.2, 1.0, (V, J)), axis=1)
    z_av[:, 0] = 1.0
    state = QueueState(q_b, q_s, vq, state.q_b0, state.q_s0, state.x_av, z_av, 1)
    sinr = 10.0 ** (rng.uniform(-0.5, 3.0, (V, M)))
    rates = cfg.rb_bandwidth * np.log2(1.0 + sinr)
    pool = np.where(free_mask, 1, 0)
    rb_mask = np.ones((V, M), dtype=bool)
    members = {0: [V - 1]} if relayed else {}
    coeffs = compute_coefficients(state, rates, pool, rb_mask, free_mask, members, catalog, cfg)
    return coeffs, cfg


def compare(coeffs: DppCoefficients, cfg: ScenarioConfig) -> tuple[float, float]:
    ccp = ccp_solve(coeffs, SlotConstraints(), cfg.ccp_max_iters, cfg.ccp_tolerance)
    best = oracle_solve(coeffs, SlotConstraints())
    return ccp.surrogate_value, best.surrogate_value


def run_oracle_suite(instances: int, rng: RandomSource, gap_tol: float = 0.05, exact_rtol: float = 1e-9) -> dict:
    gaps = []
    exact = 0
    for _ in range(instances):
        coeffs, cfg = random_instance(rng)
        got, best = compare(coeffs, cfg)
        gap = abs(got - best) / max(abs(best), 1e-12)
        gaps.append(gap)
        exact += int(abs(got - best) <= exact_rtol * max(1.0, abs(best)))
    gaps = np.array(gaps)
    within = float(np.mean(gaps <= gap_tol)) if instances else 1.0
    share = exact / instances if instances else 1.0
    return {
        "instances": instances,
        "within_tolerance_fraction": within,
        "exact_fraction": share,
        "max_relative_gap": float(gaps.max()) if instances else 0.0,
        "passed": bool(within == 1.0 and share >= 0.8),
    }
