"""Independent admissibility check of slot decisions.

Nothing here reuses scheduler code: every quantity is recomputed from the
decision, the partition and the per-RB link rates.
"""
from __future__ import annotations

from typing import Iterable

import numpy as np

from .model import RSU, SL, SlicePartition, SlotDecision, VideoCatalog, check_partition


def check_decision(
    decision: SlotDecision,
    partition: SlicePartition,
    catalog: VideoCatalog,
    demand: np.ndarray,
    rsu_rate: np.ndarray,
    vehicles: Iterable[int] | None = None,
    partition_checked: bool = False,
    rtol: float = 1e-9,
) -> list[str]:
    """List every violated constraint of one slot's decision (empty when admissible).

    Covered: the slice partition, the telescoped required rate against the
    arrival rate ``demand``, the leader backhaul budget, binary RB holdings
    confined to the serving pool, and exclusive use of each RB per pool.
    """
    out: list[str] = []
    V = len(decision.level)
    if not partition_checked:
        out += check_partition(partition, range(V) if vehicles is None else vehicles)

    # required rate and prefix structure
    level = np.asarray(decision.level)
    J = decision.num_levels
    if level.min(initial=0) < -1 or level.max(initial=-1) >= J:
        out.append("3: quality level out of range")
    else:
        z = decision.z.astype(float)
        if np.any(np.diff(z, axis=-1) > 0):
            out.append("3: quality indicator is not a prefix")
        steps = np.diff(catalog.rates, prepend=0.0)
        req = z @ steps
        bad = ~np.isclose(req, demand, rtol=rtol, atol=1e-6)
        for v in np.flatnonzero(bad):
            out.append(f"3: vehicle {v} arrival rate {demand[v]:.6g} != required {req[v]:.6g}")

    rsu_rbs = np.asarray(decision.rsu_rbs)
    sl_rbs = np.asarray(decision.sl_rbs)
    if rsu_rbs.dtype != bool or sl_rbs.dtype != bool:
        out.append("8a: RB indicators are not binary")
        rsu_rbs = rsu_rbs.astype(bool)
        sl_rbs = sl_rbs.astype(bool)
    both = rsu_rbs.any(axis=1) & sl_rbs.any(axis=1)
    for v in np.flatnonzero(both):
        out.append(f"8b: vehicle {v} holds RSU and SL RBs")

    kind = np.array([partition.links[v].kind for v in range(V)])
    node = np.array([partition.links[v].node for v in range(V)])
    for v in np.flatnonzero((kind == SL) & rsu_rbs.any(axis=1)):
        out.append(f"8c: free vehicle {v} holds RSU RBs")
    for v in np.flatnonzero((kind == RSU) & sl_rbs.any(axis=1)):
        out.append(f"8d: vehicle {v} holds SL RBs without a slice leader")

    for b in np.unique(node[kind == RSU]):
        used = rsu_rbs[(kind == RSU) & (node == b)].sum(axis=0)
        for m in np.flatnonzero(used > 1):
            out.append(f"9: RSU {b} RB {m} shared by {used[m]} vehicles")
    for s in np.unique(node[kind == SL]):
        used = sl_rbs[(kind == SL) & (node == s)].sum(axis=0)
        for m in np.flatnonzero(used > 1):
            out.append(f"9: slice leader {s} RB {m} shared by {used[m]} vehicles")

    # leader backhaul budget
    relay = np.asarray(decision.relay_rate) if len(decision.relay_rate) else np.zeros(V)
    if np.any(relay[kind != SL] != 0):
        out.append("6: relay rate assigned to a vehicle outside the free set")
    for s, members in partition.free.items():
        r_bs = float((rsu_rbs[s] * rsu_rate[s]).sum())
        relayed = float(relay[list(members)].sum()) if members else 0.0
        own = float(demand[s])
        if relayed > 0 and r_bs - relayed < own - rtol * max(1.0, r_bs):
            out.append(f"6: slice leader {s} backhaul {r_bs:.6g} - relayed {relayed:.6g} < own demand {own:.6g}")
        if s in decision.starved and relayed > 0:
            out.append(f"6: starved slice leader {s} still relays")
    return out
