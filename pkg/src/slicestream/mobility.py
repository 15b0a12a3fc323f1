"""Six-lane ring highway: vehicle placement, constant-velocity motion, RSU grid."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import RandomSource, ScenarioConfig


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class VehicleState:
    id: int
    x: float
    y: float
    lane: int
    direction: int
    speed: float

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class RsuSite:
    id: int
    x: float
    y: float

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


def lane_direction(lane: int, num_lanes: int) -> int:
    # the lower half of the lanes drives towards -x
    return -1 if lane < num_lanes // 2 else 1


def lane_center(lane: int, num_lanes: int, lane_width: float) -> float:
    return (lane - (num_lanes - 1) / 2.0) * lane_width


def spawn_topology(
    cfg: ScenarioConfig, rng: RandomSource
) -> tuple[list[VehicleState], list[RsuSite]]:
    if cfg.inter_vehicle_distance > cfg.highway_length:
        raise TopologyError("empty lane: inter_vehicle_distance exceeds highway_length")
    per_lane = int(math.floor(cfg.highway_length / cfg.inter_vehicle_distance + 1e-9))
    vehicles: list[VehicleState] = []
    for lane in range(cfg.num_lanes):
        phase = rng.uniform(0.0, cfg.inter_vehicle_distance)
        y = lane_center(lane, cfg.num_lanes, cfg.lane_width)
        for k in range(per_lane):
            x = (phase + k * cfg.inter_vehicle_distance) % cfg.highway_length
            vehicles.append(
                VehicleState(
                    id=len(vehicles),
                    x=x,
                    y=y,
                    lane=lane,
                    direction=lane_direction(lane, cfg.num_lanes),
                    speed=cfg.vehicle_speed,
                )
            )
    rsus = [
        RsuSite(
            id=b,
            x=cfg.inter_rsu_distance / 2.0 + b * cfg.inter_rsu_distance,
            y=cfg.rsu_lateral_offset if b % 2 == 0 else -cfg.rsu_lateral_offset,
        )
        for b in range(cfg.rsu_count)
    ]
    return vehicles, rsus


def advance(vehicles: Sequence[VehicleState], dt: float, highway_length: float) -> list[VehicleState]:
    if not dt > 0:
        raise ValueError("dt must be > 0")
    return [
        replace(v, x=(v.x + v.direction * v.speed * dt) % highway_length) for v in vehicles
    ]


class Fleet:
    """Array view of the vehicle population used inside the slot loop."""

    def __init__(self, vehicles: Sequence[VehicleState], highway_length: float):
        self.ids = np.array([v.id for v in vehicles], dtype=int)
        self.x = np.array([v.x for v in vehicles], dtype=float)
        self.y = np.array([v.y for v in vehicles], dtype=float)
        self.lane = np.array([v.lane for v in vehicles], dtype=int)
        self.velocity = np.array([v.direction * v.speed for v in vehicles], dtype=float)
        self.length = float(highway_length)

    def __len__(self) -> int:
        return len(self.ids)

    def advance(self, dt: float) -> None:
        if not dt > 0:
            raise ValueError("dt must be > 0")
        self.x = np.mod(self.x + self.velocity * dt, self.length)

    @property
    def positions(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])


def ring_dx(x1: np.ndarray, x2: np.ndarray, length: float) -> np.ndarray:
    dx = np.abs(np.subtract.outer(np.asarray(x1, float), np.asarray(x2, float)))
    return np.minimum(dx, length - dx)


def pairwise_distance(p1: np.ndarray, p2: np.ndarray, length: float) -> np.ndarray:
    """Euclidean distance on the ring highway between two point sets."""
    p1 = np.atleast_2d(p1)
    p2 = np.atleast_2d(p2)
    dx = ring_dx(p1[:, 0], p2[:, 0], length)
    dy = np.subtract.outer(p1[:, 1], p2[:, 1])
    return np.hypot(dx, dy)


def nearest_rsu(positions: np.ndarray, rsus: Sequence[RsuSite], length: float) -> np.ndarray:
    sites = np.array([r.position for r in rsus])
    return np.argmin(pairwise_distance(positions, sites, length), axis=1)


def dump_topology(vehicles: Sequence[VehicleState], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "x", "y", "lane", "direction"])
        for v in vehicles:
            writer.writerow([v.id, f"{v.x:.4f}", f"{v.y:.4f}", v.lane, v.direction])
