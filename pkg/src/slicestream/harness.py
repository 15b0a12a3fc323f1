"""Slot-loop simulation, single-cell runs and sweep plans."""
from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from . import __version__
from .channel import assemble, sample_v2i, sample_v2v, serving_rates, sinr_trace_rows, write_sinr_trace
from .checker import check_decision
from .metrics import RunSeries, buffered_playback, merge_tables, write_cell_reports
from .mobility import Fleet, dump_topology, nearest_rsu, spawn_topology
from .model import (
    RSU,
    SL,
    ConfigError,
    Link,
    RandomSource,
    ScenarioConfig,
    SlicePartition,
    SlotDecision,
    VideoCatalog,
    check_partition,
    config_from_mapping,
    cumulative_indicator,
    dump_config,
    load_config,
    validate_config,
)
from .queueing import QueueState, level_rate, step_virtual_queues, update_running_averages
from .scheduler import (
    SlotConstraints,
    baseline1_schedule,
    baseline2_schedule,
    ccp_solve,
    compute_coefficients,
    edge_relays,
    enforce_backhaul,
    fill_idle_rbs,
    greedy_levels,
    pool_members,
    trim_surplus_rbs,
)
from .slicing import partition_rows, reslice, write_partition_trace

log = logging.getLogger(__name__)

SCHEDULERS = ("proposed", "baseline1", "baseline2")
STAGES = ("mobility", "v2i", "slicing", "v2v", "schedule", "backhaul", "queues", "record")
TRACE_LEVELS = ("none", "standard", "full")


class SimulationError(RuntimeError):
    pass


class PipelineGuard:
    """Asserts that the stages of one slot run in their fixed order."""

    def __init__(self) -> None:
        self._next = 0

    def start_slot(self) -> None:
        self._next = 0

    def enter(self, stage: str) -> None:
        idx = STAGES.index(stage)
        if idx < self._next:
            raise AssertionError(f"stage '{stage}' entered out of order")
        self._next = idx + 1


@dataclass(frozen=True)
class TraceOptions:
    level: str = "standard"
    stride: int = 100

    def __post_init__(self):
        if self.level not in TRACE_LEVELS:
            raise ValueError(f"trace level must be one of {TRACE_LEVELS}")
        if self.stride < 1:
            raise ValueError("trace stride must be >= 1")


# ---------------------------------------------------------------------------
# scenario helpers
# ---------------------------------------------------------------------------


def vehicles_per_rsu(cfg: ScenarioConfig) -> float:
    per_lane = math.floor(cfg.highway_length / cfg.inter_vehicle_distance + 1e-9)
    return per_lane * cfg.num_lanes / cfg.rsu_count


def with_density(cfg: ScenarioConfig, per_rsu: float) -> ScenarioConfig:
    """Set the inter-vehicle distance that yields ``per_rsu`` vehicles per RSU."""
    per_lane = per_rsu * cfg.rsu_count / cfg.num_lanes
    if per_lane < 1 or abs(per_lane - round(per_lane)) > 1e-9:
        raise ConfigError([f"{per_rsu} vehicles per RSU is not a whole number of vehicles per lane"])
    return cfg.replace(inter_vehicle_distance=cfg.highway_length / round(per_lane))


def total_slots(cfg: ScenarioConfig, catalog: VideoCatalog) -> int:
    if cfg.num_chunks is not None:
        return int(round(cfg.num_chunks * catalog.chunk_duration / cfg.slot_duration))
    return cfg.slots


def relay_partition(positions: np.ndarray, serving: np.ndarray, rsu_x: np.ndarray, cfg: ScenarioConfig) -> SlicePartition:
    """Fixed-relay partition: cell-edge vehicles hang off their nearest mid-cell neighbour."""
    relays = edge_relays(positions, rsu_x, cfg)
    free: dict[int, set[int]] = {}
    for v, r in relays.items():
        free.setdefault(r, set()).add(v)
    links = {
        v: Link(SL, relays[v]) if v in relays else Link(RSU, int(serving[v])) for v in range(len(positions))
    }
    leaders = frozenset(free)
    compelled = frozenset(range(len(positions))) - leaders - frozenset(relays)
    return SlicePartition(leaders, {s: frozenset(m) for s, m in free.items()}, compelled, links)


@dataclass
class Layout:
    """Row structure of the scheduling problem for one partition."""

    pool: np.ndarray
    rb_mask: np.ndarray
    rsu_row: np.ndarray
    node: np.ndarray
    free_mask: np.ndarray
    leaders: tuple[int, ...]
    leader_members: dict[int, np.ndarray]
    members: np.ndarray
    pool_size: np.ndarray  # per vehicle: members in its pool

    @classmethod
    def build(cls, partition: SlicePartition, num_vehicles: int, num_rsus: int, cfg: ScenarioConfig) -> "Layout":
        V = num_vehicles
        M = max(cfg.num_rbs_rsu, cfg.num_rbs_sl)
        rsu_row = np.array([partition.links[v].kind == RSU for v in range(V)])
        node = np.array([partition.links[v].node for v in range(V)], dtype=int)
        leaders = tuple(sorted(partition.leaders))
        rank = {s: i for i, s in enumerate(leaders)}
        pool = np.where(rsu_row, node, num_rsus + np.array([rank.get(n, 0) for n in node]))
        rb_mask = np.zeros((V, M), dtype=bool)
        rb_mask[rsu_row, : cfg.num_rbs_rsu] = True
        rb_mask[~rsu_row, : cfg.num_rbs_sl] = True
        members = {s: np.array(sorted(partition.free.get(s, ())), dtype=int) for s in leaders}
        counts = np.bincount(pool, minlength=num_rsus + len(leaders))
        return cls(pool, rb_mask, rsu_row, node, ~rsu_row, leaders, members, pool_members(pool), counts[pool])


# ---------------------------------------------------------------------------
# slot loop
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    series: RunSeries
    stats: dict[str, Any]
    violations: list[str]


class _TraceSink:
    def __init__(self, out_dir: Path | None, options: TraceOptions):
        self.enabled = out_dir is not None and options.level != "none"
        self.full = options.level == "full"
        self.stride = 1 if self.full else options.stride
        self.dir = out_dir
        self.topology: list[tuple] = []
        self.partition: list[tuple] = []
        self.queue: list[tuple] = []
        self.decision: list[tuple] = []
        self.sinr: list[tuple] = []

    def wants(self, t: int) -> bool:
        return self.enabled and t % self.stride == 0


def run_slot_loop(
    cfg: ScenarioConfig,
    catalog: VideoCatalog,
    scheduler: str,
    out_dir: str | Path | None = None,
    trace: TraceOptions = TraceOptions(),
    check: bool = True,
) -> RunResult:
    """Simulate one replication; deterministic in ``(cfg, catalog, scheduler)``."""
    validate_config(cfg, catalog)
    if scheduler not in SCHEDULERS:
        raise ValueError(f"unknown scheduler '{scheduler}'")
    out = Path(out_dir) if out_dir is not None else None
    sink = _TraceSink(out, trace)

    mob_rng = RandomSource(cfg.seed, RandomSource.MOBILITY)
    ch_rng = RandomSource(cfg.seed, RandomSource.CHANNEL)
    cl_rng = RandomSource(cfg.seed, RandomSource.CLUSTERING)
    vehicles, rsus = spawn_topology(cfg, mob_rng)
    fleet = Fleet(vehicles, cfg.highway_length)
    rsu_x = np.array([r.x for r in rsus])
    V, B = len(fleet), len(rsus)
    Mr, Ms, J = cfg.num_rbs_rsu, cfg.num_rbs_sl, catalog.num_levels
    dt = cfg.slot_duration
    T = total_slots(cfg, catalog)
    chunk_slots = int(round(catalog.chunk_duration / dt))
    n_chunks = -(-T // chunk_slots) if T else 0

    state = QueueState.initial(V, cfg, catalog)
    levels = np.zeros(V, dtype=int)
    level_hist = np.zeros((n_chunks, V), dtype=int)
    delivered = np.zeros((T, V))
    pf_avg = np.zeros(V)
    prev_x = None
    rsu_active = None
    sl_active: dict[int, np.ndarray] = {}
    partition = None
    layout = None
    cluster_counts: list[int] = []
    stats = {
        "slots": T,
        "vehicles": V,
        "rsus": B,
        "checked_slots": 0,
        "constraint_violations": 0,
        "starved_events": 0,
        "ccp_solves": 0,
        "ccp_iterations": 0,
        "ccp_not_converged": 0,
        "mean_leaders": 0.0,
        "mean_free": 0.0,
        "dissolved_clusters": 0,
    }
    violations: list[str] = []
    guard = PipelineGuard()
    epochs = 0
    stage = "setup"
    t = -1
    try:
        for t in range(T):
            guard.start_slot()
            stage = "mobility"
            guard.enter(stage)
            if t > 0:
                fleet.advance(dt)
            positions = fleet.positions

            stage = "v2i"
            guard.enter(stage)
            v2i = sample_v2i(positions, rsus, cfg, ch_rng, rsu_active)

            if t % cfg.reslicing_period == 0:
                stage = "slicing"
                guard.enter(stage)
                serving = nearest_rsu(positions, rsus, cfg.highway_length)
                if scheduler == "proposed":
                    probe = assemble(v2i, sample_v2v(positions, [], [], cfg, ch_rng), [], cfg)
                    outcome = reslice(probe, positions, rsus, cfg, cl_rng)
                    new_partition = outcome.partition
                    cluster_counts.append(len(outcome.clusters))
                    stats["dissolved_clusters"] += outcome.dissolved
                elif scheduler == "baseline2":
                    new_partition = relay_partition(positions, serving, rsu_x, cfg)
                    cluster_counts.append(len(new_partition.leaders))
                else:
                    new_partition = SlicePartition.all_compelled({v: int(serving[v]) for v in range(V)})
                    cluster_counts.append(0)
                if check:
                    bad = check_partition(new_partition, range(V))
                    if bad:
                        raise SimulationError("; ".join(bad))
                state = _carry_over(state, partition, new_partition)
                partition = new_partition
                layout = Layout.build(partition, V, B, cfg)
                stats["mean_leaders"] += len(layout.leaders)
                stats["mean_free"] += int(layout.free_mask.sum())
                epochs += 1
                if sink.enabled:
                    sink.topology.extend(
                        (t, v, f"{positions[v, 0]:.4f}", f"{positions[v, 1]:.4f}", int(fleet.lane[v])) for v in range(V)
                    )
                    sink.partition.extend(partition_rows(t, partition))

            stage = "v2v"
            guard.enter(stage)
            sl_prev = np.array([sl_active.get(s, np.ones(Ms, dtype=bool)) for s in layout.leaders]).reshape(-1, Ms)
            v2v = sample_v2v(positions, layout.leaders, partition.free_vehicles, cfg, ch_rng, sl_prev if layout.leaders else None)
            snap = assemble(v2i, v2v, layout.leaders, cfg)
            rsu_rate, sl_rate = serving_rates(snap, partition, V)
            M = layout.rb_mask.shape[1]
            rates = np.zeros((V, M))
            rates[:, :Mr] = np.where(layout.rsu_row[:, None], rsu_rate, 0.0)
            rates[:, :Ms] += np.where(layout.rsu_row[:, None], 0.0, sl_rate)
            rates_slot = rates * dt
            if sink.full:
                sink.sinr.extend(sinr_trace_rows(t, snap, partition))

            stage = "schedule"
            guard.enter(stage)
            boundary = t % chunk_slots == 0
            backlog = np.where(layout.rsu_row, state.q_b, state.q_s)
            for s, members in layout.leader_members.items():
                if members.size:
                    backlog[s] += state.q_b[members].sum()
            surrogate, iters = float("nan"), 0
            if scheduler == "proposed":
                coeffs = compute_coefficients(
                    state, rates, layout.pool, layout.rb_mask, layout.free_mask, layout.leader_members, catalog, cfg
                )
                if boundary:
                    sol = ccp_solve(
                        coeffs, SlotConstraints(), cfg.ccp_max_iters, cfg.ccp_tolerance, prev_x, levels
                    )
                    levels = sol.levels
                    stats["ccp_solves"] += 1
                    stats["ccp_iterations"] += sol.ccp_iterations
                    stats["ccp_not_converged"] += int(not sol.converged)
                else:
                    sol = ccp_solve(coeffs, SlotConstraints(fixed_levels=levels))
                surrogate, iters = sol.surrogate_value, sol.ccp_iterations
                x = trim_surplus_rbs(sol.x, rates_slot, backlog)
                x = fill_idle_rbs(x, rates_slot, layout.pool, layout.rb_mask, backlog, layout.members)
            else:
                if boundary:
                    levels = greedy_levels(_expected_rates(rates, layout, cfg), catalog)
                pick = baseline1_schedule if scheduler == "baseline1" else baseline2_schedule
                x = pick(rates_slot, layout.pool, layout.rb_mask, backlog, pf_avg, layout.members)
            prev_x = x
            if boundary:
                level_hist[t // chunk_slots] = levels

            stage = "backhaul"
            guard.enter(stage)
            demand = level_rate(levels, catalog)
            capacity = (x * rates).sum(axis=1)
            requests = {
                s: {int(f): state.q_b[f] / dt for f in members} for s, members in layout.leader_members.items()
            }
            backhaul = {s: float(capacity[s]) for s in layout.leaders}
            result = enforce_backhaul(backhaul, {s: float(demand[s]) for s in layout.leaders}, requests)
            relay_rate = np.zeros(V)
            for f, r in result.relay_rate.items():
                relay_rate[f] = r
            stats["starved_events"] += len(result.starved)
            decision = SlotDecision(
                rsu_rbs=x[:, :Mr] & layout.rsu_row[:, None],
                sl_rbs=x[:, :Ms] & ~layout.rsu_row[:, None],
                level=levels,
                num_levels=J,
                service_rate=capacity,
                relay_rate=relay_rate,
                backhaul=backhaul,
                starved=result.starved,
            )
            if check:
                bad = check_decision(decision, partition, catalog, demand, rsu_rate, partition_checked=True)
                stats["checked_slots"] += 1
                if bad:
                    stats["constraint_violations"] += 1
                    violations.extend(f"slot {t}: {msg}" for msg in bad)

            stage = "queues"
            guard.enter(stage)
            arrival = demand * dt
            cap_bits = capacity * dt
            relayed = np.minimum(relay_rate * dt, state.q_b)
            own_cap = cap_bits.copy()
            for s, members in layout.leader_members.items():
                if members.size:
                    own_cap[s] -= relayed[members].sum()
            q_b, q_s = state.q_b, state.q_s
            rsu = layout.rsu_row
            served = np.where(rsu, np.minimum(q_b, own_cap), np.minimum(q_s, cap_bits))
            new_qb = np.where(rsu, q_b - served, np.maximum(q_b - relayed, 0.0)) + arrival
            new_qs = np.where(rsu, 0.0, q_s - served + relayed)
            state = QueueState(new_qb, new_qs, state.vq, state.q_b0, state.q_s0, state.x_av, state.z_av, state.t)
            state = step_virtual_queues(state, layout.free_mask, demand, cfg)
            state = update_running_averages(
                state, np.hstack([decision.rsu_rbs, decision.sl_rbs]), cumulative_indicator(levels, J)
            )
            delivered[t] = served
            if scheduler != "proposed":
                w = 1.0 / cfg.pf_window
                pf_avg = (1.0 - w) * pf_avg + w * served

            stage = "record"
            guard.enter(stage)
            rsu_active = np.zeros((B, Mr), dtype=bool)
            used = decision.rsu_rbs
            for b in range(B):
                rsu_active[b] = used[rsu & (layout.node == b)].any(axis=0)
            sl_active = {s: decision.sl_rbs[~rsu & (layout.node == s)].any(axis=0) for s in layout.leaders}
            if sink.wants(t):
                for v in range(V):
                    link = partition.links[v]
                    held = np.flatnonzero(decision.rsu_rbs[v] if link.kind == RSU else decision.sl_rbs[v])
                    sink.decision.append(
                        (t, v, f"{link.kind}{link.node}", " ".join(map(str, held)), int(levels[v]), f"{surrogate:.9g}", iters)
                    )
                    sink.queue.append((t, v, state.q_b[v], state.q_s[v], state.vq[v]))
    except (AssertionError, SimulationError, ValueError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        raise SimulationError(f"slot {t}, module {stage}: {exc}") from exc

    if epochs:
        stats["mean_leaders"] /= epochs
        stats["mean_free"] /= epochs
    stats["violations_sample"] = violations[:20]
    series = RunSeries(level_hist, delivered, np.array(cluster_counts, dtype=int))
    if sink.enabled:
        _write_traces(sink, vehicles, series, cfg, catalog)
    return RunResult(series, stats, violations)


def _carry_over(state: QueueState, old: SlicePartition | None, new: SlicePartition) -> QueueState:
    """Bits parked at a slice leader that no longer serves the vehicle return to the RSU queue.

    Virtual queues keep their value across role changes.
    """
    if old is None:
        return state
    moved = np.array([old.links[v] != new.links[v] and old.links[v].kind == SL for v in range(len(state.q_b))])
    if not moved.any():
        return state
    q_b = state.q_b + np.where(moved, state.q_s, 0.0)
    q_s = np.where(moved, 0.0, state.q_s)
    return QueueState(q_b, q_s, state.vq, state.q_b0, state.q_s0, state.x_av, state.z_av, state.t)


def _expected_rates(rates: np.ndarray, layout: Layout, cfg: ScenarioConfig) -> np.ndarray:
    """Fair-share service rate each vehicle can expect from its pool (bit/s)."""
    rsu = layout.rsu_row
    width = np.where(rsu, cfg.num_rbs_rsu, cfg.num_rbs_sl)
    mean_rate = rates.sum(axis=1) / width
    share = width / np.maximum(layout.pool_size, 1) * mean_rate
    out = share.copy()
    for s, members in layout.leader_members.items():
        if members.size:
            split = share[s] / (1 + members.size)
            out[s] = split
            out[members] = np.minimum(share[members], split)
    return out


def _write_traces(sink: _TraceSink, vehicles, series: RunSeries, cfg: ScenarioConfig, catalog: VideoCatalog) -> None:
    d = sink.dir
    d.mkdir(parents=True, exist_ok=True)
    dump_topology(vehicles, d / "topology_initial.csv")
    with open(d / "topology.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["slot", "vehicle", "x", "y", "lane"])
        w.writerows(sink.topology)
    write_partition_trace(d / "partition.csv", sink.partition)
    buf = buffered_playback(series, cfg, catalog) if series.delivered.size else None
    with open(d / "queue.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["slot", "vehicle", "q_bv_bits", "q_sv_bits", "U_or_Y_bits", "buffered_playback_s"])
        for t, v, qb, qs, vq in sink.queue:
            w.writerow([t, v, f"{qb:.6f}", f"{qs:.6f}", f"{vq:.6f}", f"{buf[t, v]:.6f}"])
    with open(d / "decision.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["slot", "vehicle", "serving_node", "rbs", "level", "surrogate_value", "ccp_iterations"])
        w.writerows(sink.decision)
    if sink.full:
        write_sinr_trace(d / "sinr.csv", sink.sinr)


# ---------------------------------------------------------------------------
# cells and plans
# ---------------------------------------------------------------------------


def run_cell(
    cfg: ScenarioConfig,
    catalog: VideoCatalog,
    scheduler: str,
    out_dir: str | Path,
    cell: str = "cell",
    trace: TraceOptions = TraceOptions(),
    check: bool = True,
) -> dict:
    """Run one replication and write its series, traces and reports to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, catalog, out / "config.yaml")
    result = run_slot_loop(cfg, catalog, scheduler, out / "traces", trace, check)
    result.series.save(out / "series")
    extra = {
        "seed": cfg.seed,
        "config_hash": cfg.digest(catalog),
        **{k: v for k, v in result.stats.items()},
    }
    return write_cell_reports(out, cell, scheduler, result.series, cfg, catalog, vehicles_per_rsu(cfg), extra)


PSEUDO_FIELDS = ("vehicles_per_rsu",)


@dataclass
class ExperimentPlan:
    base: ScenarioConfig
    catalog: VideoCatalog = field(default_factory=VideoCatalog)
    sweeps: list[tuple[str, list]] = field(default_factory=list)
    replications: int = 1
    schedulers: tuple[str, ...] = ("proposed",)
    output: Path = Path("out")

    def validate(self) -> None:
        errors = []
        names = set(self.base.to_dict())
        for name, values in self.sweeps:
            if name not in names and name not in PSEUDO_FIELDS:
                errors.append(f"sweep over unknown field '{name}'")
            if not values:
                errors.append(f"sweep '{name}' has no values")
        if self.replications < 1:
            errors.append("replications must be >= 1")
        for s in self.schedulers:
            if s not in SCHEDULERS:
                errors.append(f"unknown scheduler '{s}'")
        if not self.schedulers:
            errors.append("no scheduler selected")
        if errors:
            raise ConfigError(errors)

    def cells(self) -> list["Cell"]:
        self.validate()
        names = [n for n, _ in self.sweeps]
        grids = list(itertools.product(*[v for _, v in self.sweeps])) or [()]
        out = []
        for si, point in enumerate(grids):
            cfg = self.base
            for name, value in zip(names, point):
                cfg = with_density(cfg, value) if name == "vehicles_per_rsu" else cfg.replace(**{name: value})
            validate_config(cfg, self.catalog)
            for rep in range(self.replications):
                seeded = cfg.replace(seed=derive_seed(self.base.seed, si, rep))
                for sched in self.schedulers:
                    cell_id = f"p{si:03d}_r{rep:02d}_{sched}"
                    out.append(Cell(cell_id, si, rep, sched, dict(zip(names, point)), seeded))
        return out


@dataclass(frozen=True)
class Cell:
    id: str
    sweep_index: int
    replication: int
    scheduler: str
    point: dict
    config: ScenarioConfig


def derive_seed(base: int, sweep_index: int, replication: int) -> int:
    ss = np.random.SeedSequence(int(base), spawn_key=(int(sweep_index), int(replication)))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


MANIFEST_HEADER = ["cell", "scheduler", "sweep_point", "replication", "config_hash", "seed", "status", "wall_time_s", "version", "error"]


def _run_cell_job(args) -> dict:
    cell, catalog, root, trace, check = args
    start = time.perf_counter()
    row = {
        "cell": cell.id,
        "scheduler": cell.scheduler,
        "sweep_point": json.dumps(cell.point, sort_keys=True),
        "replication": cell.replication,
        "config_hash": cell.config.digest(catalog),
        "seed": cell.config.seed,
        "version": __version__,
        "error": "",
    }
    try:
        run_cell(cell.config, catalog, cell.scheduler, Path(root) / cell.id, cell.id, trace, check)
        row["status"] = "ok"
    except Exception as exc:  # a failing cell must not stop the plan
        log.error("cell %s failed: %s", cell.id, exc)
        row["status"] = "failed"
        row["error"] = str(exc)
    row["wall_time_s"] = f"{time.perf_counter() - start:.3f}"
    return row


@dataclass
class PlanReport:
    rows: list[dict]
    output: Path

    @property
    def ok(self) -> bool:
        return all(r["status"] == "ok" for r in self.rows)


def run_plan(
    plan: ExperimentPlan,
    workers: int = 1,
    trace: TraceOptions = TraceOptions(),
    check: bool = True,
    figures: bool = False,
) -> PlanReport:
    cells = plan.cells()
    root = Path(plan.output)
    root.mkdir(parents=True, exist_ok=True)
    jobs = [(c, plan.catalog, root, trace, check) for c in cells]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell_job, jobs))
    else:
        rows = [_run_cell_job(j) for j in jobs]
    with open(root / "manifest.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_HEADER)
        writer.writeheader()
        writer.writerows(rows)
    good = [root / r["cell"] for r in rows if r["status"] == "ok"]
    merge_tables(good, root)
    if figures:
        from .figures import render_all

        render_all(root)
    return PlanReport(rows, root)


def load_plan(path: str | Path, output: str | Path | None = None) -> ExperimentPlan:
    """Plan file: ``base`` (config path or mapping), ``sweeps``, ``replications``, ``schedulers``, ``seed``."""
    path = Path(path)
    data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    if not isinstance(data, Mapping):
        raise ConfigError([f"{path}: top level must be a mapping"])
    unknown = set(data) - {"base", "sweeps", "replications", "schedulers", "seed", "output"}
    if unknown:
        raise ConfigError([f"unknown plan key '{k}'" for k in sorted(unknown)])
    base = data.get("base", {})
    if isinstance(base, str):
        cfg, catalog = load_config((path.parent / base) if not Path(base).is_absolute() else base)
    else:
        cfg, catalog = config_from_mapping(base)
    if "seed" in data:
        cfg = cfg.replace(seed=int(data["seed"]))
    sweeps = data.get("sweeps", {}) or {}
    if not isinstance(sweeps, Mapping):
        raise ConfigError(["sweeps must map field names to value lists"])
    plan = ExperimentPlan(
        base=cfg,
        catalog=catalog,
        sweeps=[(str(k), list(v)) for k, v in sweeps.items()],
        replications=int(data.get("replications", 1)),
        schedulers=tuple(data.get("schedulers", ["proposed"])),
        output=Path(output or data.get("output", "out")),
    )
    plan.validate()
    return plan

