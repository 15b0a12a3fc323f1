"""Shared domain types, scenario configuration and seeded random streams."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np
import yaml


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts) + 30.0


KMH = 1.0 / 3.6


class ConfigError(ValueError):
    """Raised with every violated predicate of a configuration."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class ScenarioConfig:
    # geometry
    num_rsus: int | None = None
    inter_rsu_distance: float = 1732.0
    rsu_lateral_offset: float = 35.0
    highway_length: float = 10_000.0
    num_lanes: int = 6
    lane_width: float = 4.0
    vehicle_speed: float = 140.0 * KMH
    inter_vehicle_distance: float = 800.0
    # radio
    rsu_tx_power: float = dbm_to_watts(46.0)
    sl_tx_power: float = dbm_to_watts(20.0)
    rb_bandwidth: float = 180e3
    num_rbs_rsu: int = 25
    num_rbs_sl: int = 25
    # thermal noise over one RB plus a 7 dB receiver noise figure
    noise_power: float = dbm_to_watts(-174.0 + 10.0 * math.log10(180e3) + 7.0)
    pathloss_exp_v2i: float = 3.68
    pathloss_exp_v2v: float = 2.75
    carrier_v2i: float = 2.0e9
    carrier_v2v: float = 5.9e9
    fading: bool = True
    # reliability / control
    epsilon: float = 0.1
    playback_threshold: float = 0.5
    gamma: float = 0.5
    beta: float = 0.5
    alpha: float = 10.0
    eta: float = 1.0e13
    quality_weighting: str = "cumulative"
    ccp_max_iters: int = 20
    ccp_tolerance: float = 1e-6
    # slicing
    neighborhood_size: float = 10.0
    squared_kernel: bool = False
    weak_sinr_threshold_db: float = 3.0
    reslicing_period: int = 100
    kmeans_restarts: int = 50
    # baselines
    edge_fraction: float = 0.2
    relay_radius: float = 200.0
    pf_window: int = 100
    # timeline
    slot_duration: float = 1e-3
    duration: float = 30.0
    num_chunks: int | None = None
    warmup: float | None = None
    seed: int = 1

    @property
    def slots(self) -> int:
        return int(round(self.duration / self.slot_duration))

    @property
    def warmup_seconds(self) -> float:
        return self.playback_threshold if self.warmup is None else self.warmup

    @property
    def rsu_count(self) -> int:
        if self.num_rsus is not None:
            return self.num_rsus
        return int(math.floor(self.highway_length / self.inter_rsu_distance + 1e-9))

    def replace(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def digest(self, catalog: "VideoCatalog | None" = None) -> str:
        payload = {"scenario": self.to_dict()}
        if catalog is not None:
            payload["video"] = catalog.to_dict()
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class VideoCatalog:
    levels: tuple[tuple[str, float], ...] = (
        ("240p", 400e3),
        ("360p", 800e3),
        ("720p", 1200e3),
    )
    chunk_duration: float = 1.0

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def labels(self) -> list[str]:
        return [label for label, _ in self.levels]

    @property
    def rates(self) -> np.ndarray:
        return np.array([rate for _, rate in self.levels], dtype=float)

    @property
    def increments(self) -> np.ndarray:
        """Per-level rate step r(j) - r(j-1), with r(-1) = 0."""
        return np.diff(self.rates, prepend=0.0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "levels": [{"label": l, "rate": r} for l, r in self.levels],
            "chunk_duration": self.chunk_duration,
        }


def validate_config(cfg: ScenarioConfig, catalog: VideoCatalog) -> ScenarioConfig:
    """Return ``cfg`` unchanged or raise :class:`ConfigError` listing every violation."""
    errors: list[str] = []

    def need(ok: bool, message: str) -> None:
        if not ok:
            errors.append(message)

    need(0.0 < cfg.epsilon < 1.0, "epsilon out of (0,1)")
    need(0.0 < cfg.gamma < 1.0, "gamma out of (0,1)")
    need(0.0 <= cfg.beta <= 1.0, "beta out of [0,1]")
    need(cfg.alpha > 0.0, "alpha must be > 0")
    need(cfg.eta >= 0.0, "eta must be >= 0")
    need(cfg.num_rbs_rsu >= 1, "num_rbs_rsu must be >= 1")
    need(cfg.num_rbs_sl >= 1, "num_rbs_sl must be >= 1")
    for name in (
        "inter_rsu_distance",
        "rsu_lateral_offset",
        "highway_length",
        "lane_width",
        "inter_vehicle_distance",
        "rsu_tx_power",
        "sl_tx_power",
        "rb_bandwidth",
        "noise_power",
        "vehicle_speed",
        "neighborhood_size",
        "slot_duration",
        "playback_threshold",
        "pathloss_exp_v2i",
        "pathloss_exp_v2v",
        "carrier_v2i",
        "carrier_v2v",
    ):
        need(getattr(cfg, name) > 0.0, f"{name} must be > 0")
    need(cfg.num_lanes >= 1, "num_lanes must be >= 1")
    need(cfg.duration >= 0.0, "duration must be >= 0")
    need(cfg.reslicing_period >= 1, "reslicing_period must be >= 1")
    need(cfg.ccp_max_iters >= 1, "ccp_max_iters must be >= 1")
    need(cfg.ccp_tolerance >= 0.0, "ccp_tolerance must be >= 0")
    need(cfg.kmeans_restarts >= 1, "kmeans_restarts must be >= 1")
    need(0.0 <= cfg.edge_fraction <= 1.0, "edge_fraction out of [0,1]")
    need(cfg.pf_window >= 1, "pf_window must be >= 1")
    need(
        cfg.quality_weighting in ("cumulative", "reversed"),
        "quality_weighting must be 'cumulative' or 'reversed'",
    )
    if cfg.num_rsus is not None:
        need(cfg.num_rsus >= 1, "num_rsus must be >= 1")
        need(
            cfg.num_rsus * cfg.inter_rsu_distance <= cfg.highway_length + 1e-6,
            "num_rsus do not fit on the highway",
        )
    else:
        need(cfg.rsu_count >= 1, "highway shorter than one inter-RSU distance")
    if cfg.num_chunks is not None:
        need(cfg.num_chunks >= 1, "num_chunks must be >= 1")
    if cfg.warmup is not None:
        need(cfg.warmup >= 0.0, "warmup must be >= 0")
    chunk_slots = catalog.chunk_duration / cfg.slot_duration
    need(
        abs(chunk_slots - round(chunk_slots)) < 1e-6 and round(chunk_slots) >= 1,
        "chunk_duration must be a whole number of slots",
    )

    need(catalog.num_levels >= 1, "video catalog needs at least one level")
    rates = [rate for _, rate in catalog.levels]
    need(all(r > 0 for r in rates), "rates must be > 0")
    need(all(b > a for a, b in zip(rates, rates[1:])), "rates not increasing")
    need(catalog.chunk_duration > 0.0, "chunk_duration must be > 0")
    if errors:
        raise ConfigError(errors)
    return cfg


# ---------------------------------------------------------------------------
# configuration files
# ---------------------------------------------------------------------------

_UNIT_ALIASES = {
    "rsu_tx_power_dbm": ("rsu_tx_power", dbm_to_watts),
    "sl_tx_power_dbm": ("sl_tx_power", dbm_to_watts),
    "noise_power_dbm": ("noise_power", dbm_to_watts),
    "vehicle_speed_kmh": ("vehicle_speed", lambda v: v * KMH),
}
_SCENARIO_FIELDS = {f.name for f in dataclasses.fields(ScenarioConfig)}


def _flatten(tree: Mapping[str, Any], errors: list[str], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in tree.items():
        path = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(_flatten(value, errors, prefix=f"{path}."))
            continue
        name = str(key)
        if name in _UNIT_ALIASES:
            target, convert = _UNIT_ALIASES[name]
            name, value = target, convert(float(value))
        if name not in _SCENARIO_FIELDS:
            errors.append(f"unknown key '{path}'")
            continue
        if name in flat:
            errors.append(f"duplicate key '{path}'")
        flat[name] = value
    return flat


def config_from_mapping(data: Mapping[str, Any]) -> tuple[ScenarioConfig, VideoCatalog]:
    """Build config and catalog from a nested mapping; unknown keys are errors.

    The optional top-level ``video`` section holds ``levels`` (list of
    ``{label, rate_kbps}`` or ``{label, rate}``) and ``chunk_duration``.
    Every other section only groups :class:`ScenarioConfig` fields.
    """
    errors: list[str] = []
    data = dict(data or {})
    video = data.pop("video", None) or {}
    catalog = VideoCatalog()
    if video:
        unknown = set(video) - {"levels", "chunk_duration"}
        errors.extend(f"unknown key 'video.{k}'" for k in sorted(unknown))
        levels = catalog.levels
        if "levels" in video:
            parsed = []
            for i, item in enumerate(video["levels"]):
                extra = set(item) - {"label", "rate", "rate_kbps"}
                errors.extend(f"unknown key 'video.levels[{i}].{k}'" for k in sorted(extra))
                rate = item["rate_kbps"] * 1e3 if "rate_kbps" in item else item.get("rate")
                if rate is None:
                    errors.append(f"video.levels[{i}] missing rate")
                    continue
                parsed.append((str(item.get("label", f"L{i}")), float(rate)))
            levels = tuple(parsed)
        catalog = VideoCatalog(levels, float(video.get("chunk_duration", catalog.chunk_duration)))
    flat = _flatten(data, errors)
    if errors:
        raise ConfigError(errors)
    defaults = ScenarioConfig()
    typed = {}
    for name, value in flat.items():
        default = getattr(defaults, name)
        if value is None or default is None or isinstance(default, str):
            typed[name] = value
        elif isinstance(default, bool):
            typed[name] = bool(value)
        elif isinstance(default, int):
            typed[name] = int(value)
        else:
            typed[name] = float(value)
    return ScenarioConfig(**typed), catalog


def load_config(path: str | Path) -> tuple[ScenarioConfig, VideoCatalog]:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, Mapping):
        raise ConfigError([f"{path}: top level must be a mapping"])
    return config_from_mapping(data)


def dump_config(cfg: ScenarioConfig, catalog: VideoCatalog, path: str | Path) -> None:
    data = cfg.to_dict()
    data["video"] = {
        "levels": [{"label": l, "rate": r} for l, r in catalog.levels],
        "chunk_duration": catalog.chunk_duration,
    }
    Path(path).write_text(yaml.safe_dump(data, sort_keys=True), encoding="utf-8")


# ---------------------------------------------------------------------------
# partition and decisions
# ---------------------------------------------------------------------------

RSU = "rsu"
SL = "sl"


@dataclass(frozen=True)
class Link:
    kind: str  # RSU or SL
    node: int  # RSU index or slice-leader vehicle id


@dataclass(frozen=True)
class SlicePartition:
    leaders: frozenset[int]
    free: Mapping[int, frozenset[int]]
    compelled: frozenset[int]
    links: Mapping[int, Link]

    @property
    def free_vehicles(self) -> frozenset[int]:
        out: set[int] = set()
        for members in self.free.values():
            out |= members
        return frozenset(out)

    def role(self, vid: int) -> str:
        if vid in self.leaders:
            return "SL"
        if vid in self.compelled:
            return "COMPELLED"
        return "FREE"

    @classmethod
    def all_compelled(cls, serving_rsu: Mapping[int, int]) -> "SlicePartition":
        return cls(
            leaders=frozenset(),
            free={},
            compelled=frozenset(serving_rsu),
            links={v: Link(RSU, b) for v, b in serving_rsu.items()},
        )


def check_partition(p: SlicePartition, all_vehicles: Iterable[int]) -> list[str]:
    """Return the violated sub-constraints of the set partition (empty when valid)."""
    vehicles = set(all_vehicles)
    violations: list[str] = []
    free_lists = [set(m) for m in p.free.values()]
    free_all: set[int] = set().union(*free_lists) if free_lists else set()
    S, C = set(p.leaders), set(p.compelled)

    if S & free_all or S & C or free_all & C:
        violations.append("1a: sets overlap")
    if S | free_all | C != vehicles:
        violations.append("1a: union does not cover the vehicle set")
    if len(vehicles) != len(S) + sum(len(m) for m in free_lists) + len(C) and not (
        "1a: sets overlap" in violations
    ):
        violations.append("1a: cardinality mismatch")

    per_rsu_s: dict[int, set[int]] = {}
    per_rsu_c: dict[int, set[int]] = {}
    for v in S | C:
        link = p.links.get(v)
        if link is not None and link.kind == RSU:
            (per_rsu_s if v in S else per_rsu_c).setdefault(link.node, set()).add(v)
    seen: set[int] = set()
    for members in per_rsu_s.values():
        if members & seen:
            violations.append("1b: slice leader served by two RSUs")
        seen |= members
    seen = set()
    for members in per_rsu_c.values():
        if members & seen:
            violations.append("1c: compelled vehicle served by two RSUs")
        seen |= members
    seen = set()
    for s, members in p.free.items():
        if s not in S:
            violations.append(f"1d: free set keyed by non-leader {s}")
        if set(members) & seen:
            violations.append("1d: free sets overlap")
        seen |= set(members)

    for v in sorted(vehicles):
        link = p.links.get(v)
        if link is None or link.kind not in (RSU, SL):
            violations.append(f"1e: vehicle {v} has no link indicator")
            continue
        if v in free_all:
            leader = next((s for s, m in p.free.items() if v in m), None)
            if link.kind != SL or link.node != leader:
                violations.append(f"1e: free vehicle {v} not linked to its slice leader")
        elif link.kind != RSU:
            violations.append(f"1e: vehicle {v} must be served by an RSU")
    extra = set(p.links) - vehicles
    if extra:
        violations.append(f"1e: link indicators for unknown vehicles {sorted(extra)}")
    return violations


@dataclass(frozen=True)
class SlotDecision:
    """RB holdings and chunk quality for every vehicle in one slot.

    ``rsu_rbs[v]`` marks RBs of vehicle v's serving RSU, ``sl_rbs[v]`` RBs of
    its serving slice leader. ``level`` is -1 when no quality is requested.
    ``service_rate`` is the per-vehicle rate on its serving link,
    ``relay_rate`` the backhaul rate a slice leader carries for each free
    vehicle, ``backhaul`` maps slice-leader id to its V2I rate and
    ``starved`` lists leaders whose V2I rate fell below their own demand.
    """

    rsu_rbs: np.ndarray
    sl_rbs: np.ndarray
    level: np.ndarray
    num_levels: int
    service_rate: np.ndarray = field(default_factory=lambda: np.zeros(0))
    relay_rate: np.ndarray = field(default_factory=lambda: np.zeros(0))
    backhaul: Mapping[int, float] = field(default_factory=dict)
    starved: frozenset[int] = frozenset()

    @property
    def z(self) -> np.ndarray:
        return cumulative_indicator(self.level, self.num_levels)


def cumulative_indicator(level: np.ndarray | int, num_levels: int) -> np.ndarray:
    """Prefix indicator z[..., j] = 1 for j <= level."""
    level = np.asarray(level)
    return (np.arange(num_levels) <= level[..., None]).astype(np.int8)


def level_from_indicator(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z)
    return z.sum(axis=-1).astype(int) - 1


class RandomSource:
    """Independent, reproducible numpy generator per (seed, stream)."""

    MOBILITY = 0
    CHANNEL = 1
    CLUSTERING = 2
    SCHEDULER = 3
    BOOTSTRAP = 4

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self.generator = np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(self.stream,)))

    def child(self, stream: int) -> "RandomSource":
        return RandomSource(self.seed, stream)

    def __getattr__(self, name: str):
        return getattr(self.generator, name)
