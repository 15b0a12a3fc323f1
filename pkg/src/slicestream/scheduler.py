"""Per-slot RB assignment and chunk-quality selection.

The proposed scheduler minimises the drift-plus-penalty bound

    sum_v sum_m x[v,m] theta[v,m] + sum_j z[v,j] phi[v,j]
          - sum_{m,j} x[v,m] z[v,j] zeta[v,m,j]

over binary RB indicators ``x`` and cumulative quality indicators ``z``.
The bilinear reward is split into a convex and a concave square; the concave
square is linearised around the current iterate (concave-convex procedure)
and the resulting majoriser is minimised by exact block steps: a per-RB
argmin for ``x`` and a prefix scan over levels for ``z``.

Rows of every coefficient array are vehicles; columns of ``theta`` are RBs of
the vehicle's own pool (``pool[v]``), masked by ``rb_mask``.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .mobility import pairwise_distance, ring_dx
from .model import ScenarioConfig, VideoCatalog, cumulative_indicator

log = logging.getLogger(__name__)

ORACLE_LIMIT = 2**20


@dataclass(frozen=True)
class DppCoefficients:
    theta: np.ndarray  # (V, M) RB coefficients
    phi: np.ndarray  # (V, J) quality coefficients
    zeta: np.ndarray  # (V, M, J) bilinear weights
    pool: np.ndarray  # (V,) pool index, -1 when the vehicle is not scheduled here
    rb_mask: np.ndarray  # (V, M) RB exists in the vehicle's pool

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.zeta.shape

    @cached_property
    def members(self) -> np.ndarray:
        return pool_members(self.pool)


def pool_members(pool: np.ndarray) -> np.ndarray:
    """(pools, width) matrix of member rows per pool in ascending order, padded with -1."""
    pool = np.asarray(pool)
    rows = np.flatnonzero(pool >= 0)
    if rows.size == 0:
        return np.zeros((0, 0), dtype=int)
    order = np.argsort(pool[rows], kind="stable")
    rows = rows[order]
    keys = pool[rows]
    uniq, start, counts = np.unique(keys, return_index=True, return_counts=True)
    rank = np.arange(rows.size) - np.repeat(start, counts)
    out = np.full((uniq.size, counts.max()), -1, dtype=int)
    out[np.searchsorted(uniq, keys), rank] = rows
    return out


@dataclass(frozen=True)
class SlotConstraints:
    allow_idle: bool = False
    fixed_levels: np.ndarray | None = None


@dataclass(frozen=True)
class SchedulerOutcome:
    x: np.ndarray  # (V, M) bool
    levels: np.ndarray  # (V,) int, -1 = idle
    surrogate_value: float
    ccp_iterations: int
    converged: bool
    history: tuple[float, ...] = field(default=())


# ---------------------------------------------------------------------------
# QoE
# ---------------------------------------------------------------------------


def quality_weights(num_levels: int, gamma: float, weighting: str = "cumulative") -> np.ndarray:
    j = np.arange(num_levels)
    if weighting == "reversed":
        return gamma ** (num_levels - 1 - j)
    return gamma**j


def sigmoid_penalty(z_now, z_prev, alpha: float):
    """Smooth stand-in for the quality-drop indicator: ~1 on drops, ~0 on rises."""
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    return expit(-alpha * (np.asarray(z_now, float) - np.asarray(z_prev, float)))


def qoe_objective(
    levels: np.ndarray,
    cfg: ScenarioConfig,
    num_levels: int,
    surrogate: bool = False,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Chunk-level QoE for a (chunks, vehicles) array of selected levels.

    Returns (per-chunk scores, per-vehicle totals, network total). Idle
    chunks (level -1) score zero and are exempt from the switching penalty.
    """
    levels = np.atleast_2d(np.asarray(levels, dtype=int))
    weights = quality_weights(num_levels, cfg.gamma, cfg.quality_weighting)
    quality = cumulative_indicator(levels, num_levels) @ weights
    penalty = np.zeros(levels.shape, dtype=float)
    if levels.shape[0] > 1:
        now, prev = levels[1:], levels[:-1]
        if surrogate:
            drop = sigmoid_penalty(now, prev, cfg.alpha)
        else:
            drop = (now < prev).astype(float)
        drop = np.where((now < 0) | (prev < 0), 0.0, drop)
        penalty[1:] = drop
    scores = quality - cfg.beta * penalty
    per_vehicle = scores.sum(axis=0)
    return scores, per_vehicle, float(per_vehicle.sum())


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------


def compute_coefficients(
    state,
    rates: np.ndarray,
    pool: np.ndarray,
    rb_mask: np.ndarray,
    free_mask: np.ndarray,
    leader_members: Mapping[int, Sequence[int]],
    catalog: VideoCatalog,
    cfg: ScenarioConfig,
) -> DppCoefficients:
    """Drift-plus-penalty coefficients for every vehicle row.

    ``rates`` holds per-RB Shannon rates (bit/s) on each vehicle's serving
    link. Queue terms are in bits and rates are converted to bits per slot,
    so the playback threshold enters the dimensionless ``eps * psi`` factor
    as a number of slots. A slice leader's RB coefficient adds the positive
    backpressure of the links it relays, i.e. how far each member's backlog
    at the RSU exceeds what is already waiting at the leader.
    """
    dt = cfg.slot_duration
    eps = cfg.epsilon
    psi = cfg.playback_threshold / dt
    q_b, q_s, vq = state.q_b, state.q_s, state.vq
    q_b0, q_s0 = state.q_b0, state.q_s0

    outside = vq + q_b - eps * q_b0
    relayed = vq + q_b + q_s - eps * (q_b0 + q_s0)
    bracket = np.where(free_mask, relayed, outside)
    quality_bracket = np.where(
        free_mask,
        vq + q_b + q_s + eps * psi * (vq + q_b + q_s - eps * (q_b0 + q_s0)) - eps * (q_b0 + q_s0),
        vq + q_b + eps * psi * (vq + q_b - eps * q_b0) - eps * q_b0,
    )
    pressure = bracket.copy()
    for s, members in leader_members.items():
        if len(members):
            m = list(members)
            pressure[s] += np.maximum(q_b[m] - q_s[m], 0.0).sum()

    rate_slot = np.where(rb_mask, rates, 0.0) * dt
    theta = -rate_slot * pressure[:, None]

    weights = quality_weights(catalog.num_levels, cfg.gamma, cfg.quality_weighting)
    f_avg = state.z_av @ weights
    step = catalog.increments * dt
    phi = -cfg.eta * f_avg[:, None] + step[None, :] * quality_bracket[:, None]
    zeta = rate_slot[:, :, None] * step[None, None, :] * (1.0 + eps * psi)
    return DppCoefficients(theta, phi, zeta, np.asarray(pool), np.asarray(rb_mask, bool))


# ---------------------------------------------------------------------------
# objective pieces
# ---------------------------------------------------------------------------


def dpp_value(coeffs: DppCoefficients, x: np.ndarray, levels: np.ndarray) -> float:
    """True drift-plus-penalty value including the bilinear term."""
    z = cumulative_indicator(levels, coeffs.phi.shape[1]).astype(float)
    x = np.asarray(x, float)
    bilinear = np.einsum("vm,vj,vmj->", x, z, coeffs.zeta)
    return float((x * coeffs.theta).sum() + (z * coeffs.phi).sum() - bilinear)


def ccp_surrogate(coeffs: DppCoefficients, x, levels, anchor_x, anchor_levels) -> float:
    """Convex majoriser of :func:`dpp_value`, tight at the anchor."""
    J = coeffs.phi.shape[1]
    z = cumulative_indicator(levels, J).astype(float)
    b = cumulative_indicator(anchor_levels, J).astype(float)
    x = np.asarray(x, float)
    a = np.asarray(anchor_x, float)
    s_anchor = a[:, :, None] + b[:, None, :]
    diff = x[:, :, None] - z[:, None, :]
    moved = (x - a)[:, :, None] + (z - b)[:, None, :]
    gamma = (coeffs.zeta / 4.0) * (s_anchor**2 + 2.0 * moved * s_anchor - diff**2)
    return float((x * coeffs.theta).sum() + (z * coeffs.phi).sum() - gamma.sum())


def square_identity(x, z):
    """(x - z)^2 - (x + z)^2, which equals -4xz."""
    return (x - z) ** 2 - (x + z) ** 2


def assign_rbs(cost: np.ndarray, coeffs: DppCoefficients) -> np.ndarray:
    """Give each RB of each pool to the member with the most negative cost.

    RBs whose best cost is not negative stay idle; ties go to the lowest id.
    """
    V, M = cost.shape
    x = np.zeros((V, M), dtype=bool)
    members = coeffs.members
    if members.size == 0:
        return x
    valid = members >= 0
    idx = np.where(valid, members, 0)
    sub = np.where(valid[:, :, None] & coeffs.rb_mask[idx], cost[idx], np.inf)
    best = np.argmin(sub, axis=1)
    value = np.take_along_axis(sub, best[:, None, :], axis=1)[:, 0, :]
    p, m = np.nonzero(value < 0)
    x[idx[p, best[p, m]], m] = True
    return x


def choose_levels(level_cost: np.ndarray, constraints: SlotConstraints) -> np.ndarray:
    """Prefix scan: level L costs the sum of per-level costs up to L."""
    if constraints.fixed_levels is not None:
        return np.asarray(constraints.fixed_levels, dtype=int).copy()
    prefix = np.cumsum(level_cost, axis=1)
    if constraints.allow_idle:
        prefix = np.hstack([np.zeros((len(prefix), 1)), prefix])
        return np.argmin(prefix, axis=1) - 1
    return np.argmin(prefix, axis=1)


def _exact_x(coeffs: DppCoefficients, levels: np.ndarray) -> np.ndarray:
    z = cumulative_indicator(levels, coeffs.phi.shape[1]).astype(float)
    cost = coeffs.theta - np.einsum("vmj,vj->vm", coeffs.zeta, z)
    return assign_rbs(cost, coeffs)


def _minimise_majoriser(coeffs, anchor_x, anchor_levels, constraints, max_rounds=50):
    J = coeffs.phi.shape[1]
    a = anchor_x.astype(float)
    b = cumulative_indicator(anchor_levels, J).astype(float)
    s = a[:, :, None] + b[:, None, :]
    linear = (coeffs.zeta / 4.0) * (1.0 - 2.0 * s)
    x_base = coeffs.theta + linear.sum(axis=2)
    z_base = coeffs.phi + linear.sum(axis=1)
    x, levels = anchor_x.copy(), anchor_levels.copy()
    for _ in range(max_rounds):
        z = cumulative_indicator(levels, J).astype(float)
        new_x = assign_rbs(x_base - 0.5 * np.einsum("vmj,vj->vm", coeffs.zeta, z), coeffs)
        new_levels = choose_levels(
            z_base - 0.5 * np.einsum("vmj,vm->vj", coeffs.zeta, new_x.astype(float)), constraints
        )
        if np.array_equal(new_x, x) and np.array_equal(new_levels, levels):
            break
        x, levels = new_x, new_levels
    return x, levels


def _polish(coeffs, x, levels, value, constraints):
    """Try adjacent quality levels per vehicle, re-solving RBs exactly."""
    if constraints.fixed_levels is not None:
        return x, levels, value
    J = coeffs.phi.shape[1]
    lowest = -1 if constraints.allow_idle else 0
    improved = True
    while improved:
        improved = False
        for v in range(len(levels)):
            for cand in (levels[v] - 1, levels[v] + 1):
                if cand < lowest or cand >= J:
                    continue
                trial = levels.copy()
                trial[v] = cand
                trial_x = _exact_x(coeffs, trial)
                trial_value = dpp_value(coeffs, trial_x, trial)
                if trial_value < value - 1e-12 * max(1.0, abs(value)):
                    x, levels, value, improved = trial_x, trial, trial_value, True
    return x, levels, value


def _feasible_anchor(coeffs: DppCoefficients, anchor_x) -> np.ndarray:
    V, M = coeffs.theta.shape
    if anchor_x is None or coeffs.members.size == 0:
        return np.zeros((V, M), dtype=bool)
    x = np.asarray(anchor_x, bool) & coeffs.rb_mask & (coeffs.pool[:, None] >= 0)
    members = coeffs.members
    valid = members >= 0
    idx = np.where(valid, members, 0)
    sub = x[idx] & valid[:, :, None]
    keep = sub & (np.cumsum(sub, axis=1) == 1)
    out = np.zeros_like(x)
    p, k, m = np.nonzero(keep)
    out[idx[p, k], m] = True
    return out


def ccp_solve(
    coeffs: DppCoefficients,
    constraints: SlotConstraints | None = None,
    max_iters: int = 20,
    tolerance: float = 1e-6,
    anchor_x: np.ndarray | None = None,
    anchor_levels: np.ndarray | None = None,
) -> SchedulerOutcome:
    constraints = constraints or SlotConstraints()
    V = coeffs.theta.shape[0]
    if constraints.fixed_levels is not None:
        levels = np.asarray(constraints.fixed_levels, dtype=int).copy()
        x = _exact_x(coeffs, levels)
        value = dpp_value(coeffs, x, levels)
        return SchedulerOutcome(x, levels, value, 1, True, (value,))

    x = _feasible_anchor(coeffs, anchor_x)
    lowest = -1 if constraints.allow_idle else 0
    if anchor_levels is None:
        levels = np.zeros(V, dtype=int)
    else:
        levels = np.clip(np.asarray(anchor_levels, dtype=int), lowest, coeffs.phi.shape[1] - 1)
    value = dpp_value(coeffs, x, levels)
    history = [value]
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        new_x, new_levels = _minimise_majoriser(coeffs, x, levels, constraints)
        new_value = dpp_value(coeffs, new_x, new_levels)
        if new_value > value:
            # numerical noise only: the majoriser is tight at the anchor
            converged = True
            break
        gain = value - new_value
        x, levels, value = new_x, new_levels, new_value
        history.append(value)
        if gain <= tolerance * max(1.0, abs(value)):
            converged = True
            break
    x, levels, value = _polish(coeffs, x, levels, value, constraints)
    if value < history[-1]:
        history.append(value)
    return SchedulerOutcome(x, levels, value, iterations, converged, tuple(history))


def oracle_solve(coeffs: DppCoefficients, constraints: SlotConstraints | None = None) -> SchedulerOutcome:
    """Exhaustive minimiser of :func:`dpp_value` over all feasible binary points.

    Candidates are visited in lexicographic order (RB owners first, "idle"
    before vehicles; then levels, lowest first) and the first minimum wins.
    """
    constraints = constraints or SlotConstraints()
    V, M, J = coeffs.shape
    rb_options: list[tuple[tuple[int, int], list[int]]] = []
    for p in np.unique(coeffs.pool[coeffs.pool >= 0]):
        rows = np.flatnonzero(coeffs.pool == p)
        for m in range(M):
            owners = [int(v) for v in rows if coeffs.rb_mask[v, m]]
            if owners:
                rb_options.append(((int(p), m), [-1] + owners))
    if constraints.fixed_levels is not None:
        level_options = [[int(l)] for l in constraints.fixed_levels]
    else:
        lowest = -1 if constraints.allow_idle else 0
        level_options = [list(range(lowest, J)) for _ in range(V)]
    count = 1
    for _, opts in rb_options:
        count *= len(opts)
    for opts in level_options:
        count *= len(opts)
    if count > ORACLE_LIMIT:
        raise ValueError(f"instance too large for exhaustive search ({count} candidates)")

    best = None
    for owners in itertools.product(*[opts for _, opts in rb_options]):
        x = np.zeros((V, M), dtype=bool)
        for ((_, m), _), v in zip(rb_options, owners):
            if v >= 0:
                x[v, m] = True
        for levels in itertools.product(*level_options):
            lv = np.array(levels, dtype=int)
            value = dpp_value(coeffs, x, lv)
            if best is None or value < best[0]:
                best = (value, x, lv)
    value, x, lv = best
    return SchedulerOutcome(x, lv, value, count, True, (value,))


def oracle_candidate_count(coeffs: DppCoefficients, constraints: SlotConstraints | None = None) -> int:
    constraints = constraints or SlotConstraints()
    V, M, J = coeffs.shape
    count = 1
    for p in np.unique(coeffs.pool[coeffs.pool >= 0]):
        rows = np.flatnonzero(coeffs.pool == p)
        for m in range(M):
            owners = int(coeffs.rb_mask[rows, m].sum())
            if owners:
                count *= owners + 1
    per_vehicle = 1 if constraints.fixed_levels is not None else J + (1 if constraints.allow_idle else 0)
    return count * per_vehicle**V


# ---------------------------------------------------------------------------
# work conservation and baselines
# ---------------------------------------------------------------------------


def trim_surplus_rbs(x, rates_slot, backlog) -> np.ndarray:
    """Release RBs a vehicle cannot use this slot.

    Held RBs are kept in descending rate order until their capacity covers
    the vehicle's backlog; the rest go back to the pool, where they add
    interference but carry no bits.
    """
    x = np.asarray(x, bool).copy()
    held = np.where(x, rates_slot, 0.0)
    order = np.argsort(-held, axis=1, kind="stable")
    sorted_rate = np.take_along_axis(held, order, axis=1)
    before = np.cumsum(sorted_rate, axis=1) - sorted_rate
    keep_sorted = (sorted_rate > 0) & (before < np.asarray(backlog, float)[:, None])
    keep = np.zeros_like(x)
    np.put_along_axis(keep, order, keep_sorted, axis=1)
    return x & keep


def fill_idle_rbs(x, rates_slot, pool, rb_mask, backlog, members=None) -> np.ndarray:
    """Hand RBs left idle to members that still hold unserved bits.

    Each idle RB goes to the member with the highest rate on it among those
    whose backlog exceeds what is already scheduled.
    """
    x = x.copy()
    members = pool_members(pool) if members is None else members
    if members.size == 0:
        return x
    valid = members >= 0
    idx = np.where(valid, members, 0)
    remaining = np.where(valid, backlog[idx] - (x * rates_slot).sum(axis=1)[idx], 0.0)
    used = (x[idx] & valid[:, :, None]).any(axis=1)
    rows = np.arange(len(members))
    for m in range(x.shape[1]):
        free_pool = ~used[:, m]
        if not free_pool.any():
            continue
        rate = np.where(valid & rb_mask[idx, m] & (remaining > 0), rates_slot[idx, m], 0.0)
        best = np.argmax(rate, axis=1)
        ok = free_pool & (rate[rows, best] > 0)
        if not ok.any():
            continue
        x[idx[rows[ok], best[ok]], m] = True
        remaining[rows[ok], best[ok]] -= rate[rows[ok], best[ok]]
    return x


def proportional_fair(rates_slot, pool, rb_mask, backlog, average, members=None) -> np.ndarray:
    """Per-RB proportional-fair assignment among backlogged members.

    The metric is rate over (long-run average plus bits granted earlier in
    the same slot), so RBs of one slot spread across equal users.
    """
    V, M = rates_slot.shape
    x = np.zeros((V, M), dtype=bool)
    members = pool_members(pool) if members is None else members
    if members.size == 0:
        return x
    valid = members >= 0
    idx = np.where(valid, members, 0)
    remaining = np.where(valid, backlog[idx], 0.0)
    granted = np.zeros(members.shape)
    avg = np.maximum(average[idx], 1.0)
    rows = np.arange(len(members))
    for m in range(M):
        rate = rates_slot[idx, m]
        ok = valid & rb_mask[idx, m] & (remaining > 0) & (rate > 0)
        metric = np.where(ok, rate / (avg + granted), -np.inf)
        best = np.argmax(metric, axis=1)
        hit = ok[rows, best]
        if not hit.any():
            continue
        r, c = rows[hit], best[hit]
        x[idx[r, c], m] = True
        granted[r, c] += rate[r, c]
        remaining[r, c] -= rate[r, c]
    return x


def greedy_levels(expected_rate: np.ndarray, catalog: VideoCatalog) -> np.ndarray:
    """Highest level whose rate fits the expected service rate, never below level 0."""
    rates = catalog.rates
    fits = expected_rate[:, None] >= rates[None, :]
    return np.maximum(fits.sum(axis=1) - 1, 0)


def baseline1_schedule(rates_slot, pool, rb_mask, backlog, average, members=None) -> np.ndarray:
    """RSU-only proportional-fair RB assignment (every vehicle compelled)."""
    return proportional_fair(rates_slot, pool, rb_mask, backlog, average, members)


def baseline2_schedule(rates_slot, pool, rb_mask, backlog, average, members=None) -> np.ndarray:
    """Proportional fair over RSU pools and fixed-relay SL pools."""
    return proportional_fair(rates_slot, pool, rb_mask, backlog, average, members)


def edge_relays(
    positions: np.ndarray,
    rsu_x: np.ndarray,
    cfg: ScenarioConfig,
) -> dict[int, int]:
    """Map each cell-edge vehicle to its relay (nearest non-edge vehicle in range).

    Cell edge means the outer ``edge_fraction`` of the span between two
    RSUs, i.e. farther than ``(1 - edge_fraction) / 2`` spans from the
    nearest RSU along the road.
    """
    along = ring_dx(positions[:, 0], rsu_x, cfg.highway_length).min(axis=1)
    edge = along > (1.0 - cfg.edge_fraction) / 2.0 * cfg.inter_rsu_distance
    inner = np.flatnonzero(~edge)
    relays: dict[int, int] = {}
    if inner.size == 0:
        return relays
    for v in np.flatnonzero(edge):
        d = pairwise_distance(positions[v], positions[inner], cfg.highway_length)[0]
        j = int(np.argmin(d))
        if d[j] <= cfg.relay_radius:
            relays[int(v)] = int(inner[j])
    return relays


# ---------------------------------------------------------------------------
# backhaul
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BackhaulResult:
    relay_rate: dict[int, float]
    starved: frozenset[int]


def enforce_backhaul(
    backhaul: Mapping[int, float],
    own_demand: Mapping[int, float],
    relay_rate: Mapping[int, Mapping[int, float]],
) -> BackhaulResult:
    """Scale relayed service so every leader keeps its own demand covered.

    ``relay_rate[s][f]`` is the service rate leader ``s`` offers member ``f``.
    If the surplus ``backhaul[s] - own_demand[s]`` is smaller than the total,
    all members of ``s`` are scaled proportionally down to it; a leader whose
    backhaul does not even cover its own demand relays nothing and is
    reported as starved.
    """
    out: dict[int, float] = {}
    starved: set[int] = set()
    for s, members in relay_rate.items():
        surplus = backhaul.get(s, 0.0) - own_demand.get(s, 0.0)
        total = float(sum(members.values()))
        if surplus < 0:
            if total > 0:
                starved.add(s)
                log.debug("slice leader %s starved: backhaul below own demand", s)
            factor = 0.0
        elif total > surplus:
            factor = surplus / total
        else:
            factor = 1.0
        for f, rate in members.items():
            out[f] = rate * factor
    return BackhaulResult(out, frozenset(starved))


def backhaul_satisfied(backhaul: float, own_demand: float, relayed: float, tol: float = 1e-9) -> bool:
    """True when relayed service fits the leader's surplus (nothing relayed if there is none)."""
    return relayed <= max(backhaul - own_demand, 0.0) + tol * max(1.0, backhaul)
