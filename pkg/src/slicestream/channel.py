"""Per-slot channel snapshots and Shannon-rate link abstraction.

Large-scale gain follows a log-distance law ``K * max(d, 1)**-n`` whose
intercept ``K`` is free-space loss at 1 m for the link's carrier; small-scale
fading is Rayleigh (unit-mean exponential power), i.i.d. over RBs and slots.
Transmit power is split evenly over the RBs of a pool. Interference on an RB
comes from co-channel transmitters that used it in the previous slot.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .mobility import RsuSite, pairwise_distance
from .model import RSU, Link, RandomSource, ScenarioConfig, SlicePartition

SPEED_OF_LIGHT = 299_792_458.0
REFERENCE_DISTANCE = 1.0


def pathloss_intercept(carrier: float) -> float:
    """Free-space power gain at the 1 m reference distance."""
    return (SPEED_OF_LIGHT / (4.0 * math.pi * carrier * REFERENCE_DISTANCE)) ** 2


def pathloss_gain(distance, exponent: float, carrier: float):
    d = np.maximum(np.asarray(distance, dtype=float), REFERENCE_DISTANCE)
    return pathloss_intercept(carrier) * (d / REFERENCE_DISTANCE) ** (-exponent)


def _interference(gain: np.ndarray, active: np.ndarray, power: float) -> np.ndarray:
    # received co-channel power from every transmitter except the serving one
    received = gain * (power * active[:, None, :])
    return received.sum(axis=0, keepdims=True) - received


@dataclass(frozen=True)
class ChannelSnapshot:
    rsu_gain: np.ndarray  # (B, V, M_rsu)
    rsu_power: float  # watts per RB
    rsu_active: np.ndarray  # (B, M_rsu) RBs each RSU used in the previous slot
    rsu_interference: np.ndarray  # (B, V, M_rsu) watts
    sl_ids: tuple[int, ...]
    sl_gain: np.ndarray  # (S, V, M_sl)
    sl_power: float
    sl_active: np.ndarray  # (S, M_sl)
    sl_interference: np.ndarray  # (S, V, M_sl)
    noise: float
    bandwidth: float

    @property
    def num_vehicles(self) -> int:
        return self.rsu_gain.shape[1]

    def _tx(self, tx: Link) -> tuple[np.ndarray, np.ndarray, float]:
        if tx.kind == RSU:
            return self.rsu_gain[tx.node], self.rsu_interference[tx.node], self.rsu_power
        s = self.sl_ids.index(tx.node)
        return self.sl_gain[s], self.sl_interference[s], self.sl_power

    def rsu_sinr(self) -> np.ndarray:
        return self.rsu_power * self.rsu_gain / (self.noise + self.rsu_interference)

    def sl_sinr(self) -> np.ndarray:
        return self.sl_power * self.sl_gain / (self.noise + self.sl_interference)

    def wideband_v2i_sinr_db(self) -> np.ndarray:
        """Best-RSU V2I SINR averaged over RBs, per vehicle, in dB."""
        mean = self.rsu_sinr().mean(axis=2).max(axis=0)
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(mean)


def sample_v2i(
    positions: np.ndarray,
    rsus: Sequence[RsuSite],
    cfg: ScenarioConfig,
    rng: RandomSource,
    active: np.ndarray | None = None,
):
    sites = np.array([r.position for r in rsus], dtype=float)
    dist = pairwise_distance(sites, positions, cfg.highway_length)
    mean_gain = pathloss_gain(dist, cfg.pathloss_exp_v2i, cfg.carrier_v2i)
    shape = (len(rsus), len(positions), cfg.num_rbs_rsu)
    fading = rng.standard_exponential(shape) if cfg.fading else np.ones(shape)
    gain = mean_gain[:, :, None] * fading
    if active is None:
        active = np.ones((len(rsus), cfg.num_rbs_rsu), dtype=bool)
    power = cfg.rsu_tx_power / cfg.num_rbs_rsu
    return gain, power, active, _interference(gain, active, power)


def sample_v2v(
    positions: np.ndarray,
    sl_ids: Sequence[int],
    receivers: Iterable[int],
    cfg: ScenarioConfig,
    rng: RandomSource,
    active: np.ndarray | None = None,
):
    sl_ids = list(sl_ids)
    receivers = np.array(sorted(receivers), dtype=int)
    n_sl, n_veh = len(sl_ids), len(positions)
    gain = np.zeros((n_sl, n_veh, cfg.num_rbs_sl))
    if n_sl and receivers.size:
        dist = pairwise_distance(positions[sl_ids], positions[receivers], cfg.highway_length)
        mean_gain = pathloss_gain(dist, cfg.pathloss_exp_v2v, cfg.carrier_v2v)
        shape = (n_sl, receivers.size, cfg.num_rbs_sl)
        fading = rng.standard_exponential(shape) if cfg.fading else np.ones(shape)
        gain[:, receivers, :] = mean_gain[:, :, None] * fading
    if active is None:
        active = np.ones((n_sl, cfg.num_rbs_sl), dtype=bool)
    power = cfg.sl_tx_power / cfg.num_rbs_sl
    return gain, power, active, _interference(gain, active, power)


def assemble(v2i, v2v, sl_ids: Sequence[int], cfg: ScenarioConfig) -> ChannelSnapshot:
    return ChannelSnapshot(
        rsu_gain=v2i[0],
        rsu_power=v2i[1],
        rsu_active=v2i[2],
        rsu_interference=v2i[3],
        sl_ids=tuple(int(s) for s in sl_ids),
        sl_gain=v2v[0],
        sl_power=v2v[1],
        sl_active=v2v[2],
        sl_interference=v2v[3],
        noise=cfg.noise_power,
        bandwidth=cfg.rb_bandwidth,
    )


def sample_channel(
    positions: np.ndarray,
    rsus: Sequence[RsuSite],
    partition: SlicePartition,
    cfg: ScenarioConfig,
    rng: RandomSource,
    rsu_active: np.ndarray | None = None,
    sl_active: np.ndarray | None = None,
) -> ChannelSnapshot:
    """Draw one slot of V2I and V2V gains for the current geometry and partition.

    ``positions`` is an (V, 2) array indexed by vehicle id. The ``*_active``
    masks are the previous slot's RB usage per transmitter; ``None`` means
    every RB was busy.
    """
    positions = np.asarray(positions, dtype=float)
    v2i = sample_v2i(positions, rsus, cfg, rng, rsu_active)
    sl_ids = sorted(partition.leaders)
    v2v = sample_v2v(positions, sl_ids, partition.free_vehicles, cfg, rng, sl_active)
    return assemble(v2i, v2v, sl_ids, cfg)


def sinr(snap: ChannelSnapshot, tx: Link, v: int, m: int) -> float:
    gain, interference, power = snap._tx(tx)
    return float(power * gain[v, m] / (snap.noise + interference[v, m]))


def link_rate(snap: ChannelSnapshot, tx: Link, v: int, rb_set: Iterable[int]) -> float:
    """Shannon rate in bit/s summed over the RBs in ``rb_set``."""
    gain, interference, power = snap._tx(tx)
    rbs = np.fromiter(rb_set, dtype=int)
    if rbs.size == 0:
        return 0.0
    ratio = power * gain[v, rbs] / (snap.noise + interference[v, rbs])
    return float(np.sum(snap.bandwidth * np.log2(1.0 + ratio)))


def serving_rates(snap: ChannelSnapshot, partition: SlicePartition, num_vehicles: int):
    """Per-RB Shannon rate (bit/s) of every vehicle on its own serving link.

    Returns ``(rsu_rate, sl_rate)`` with shapes (V, M_rsu) and (V, M_sl);
    rows of vehicles not linked to that kind of node are zero.
    """
    m_rsu = snap.rsu_gain.shape[2]
    m_sl = snap.sl_gain.shape[2]
    rsu_rate = np.zeros((num_vehicles, m_rsu))
    sl_rate = np.zeros((num_vehicles, m_sl))
    rsu_sinr = snap.rsu_sinr()
    sl_sinr = snap.sl_sinr() if snap.sl_ids else None
    sl_index = {s: i for i, s in enumerate(snap.sl_ids)}
    v_rsu, b_rsu, v_sl, s_sl = [], [], [], []
    for v, link in partition.links.items():
        if link.kind == RSU:
            v_rsu.append(v)
            b_rsu.append(link.node)
        else:
            v_sl.append(v)
            s_sl.append(sl_index[link.node])
    if v_rsu:
        rsu_rate[v_rsu] = snap.bandwidth * np.log2(1.0 + rsu_sinr[b_rsu, v_rsu])
    if v_sl:
        sl_rate[v_sl] = snap.bandwidth * np.log2(1.0 + sl_sinr[s_sl, v_sl])
    return rsu_rate, sl_rate


def write_sinr_trace(path: str | Path, rows: Iterable[tuple]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["slot", "tx", "vehicle", "rb", "sinr_dB"])
        writer.writerows(rows)


def sinr_trace_rows(slot: int, snap: ChannelSnapshot, partition: SlicePartition):
    for v, link in sorted(partition.links.items()):
        gain, interference, power = snap._tx(link)
        ratio = power * gain[v] / (snap.noise + interference[v])
        tx = f"{link.kind}{link.node}"
        for m, value in enumerate(ratio):
            yield (slot, tx, v, m, f"{10.0 * math.log10(max(value, 1e-300)):.4f}")
