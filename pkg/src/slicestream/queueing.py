"""Transmitter queues, virtual queues, running averages and playback accounting.

All queue contents are in bits; every per-slot quantity (service, arrival)
is in bits per slot. Vector helpers operate on arrays indexed by vehicle id.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import ScenarioConfig, VideoCatalog


def required_rate(z, catalog: VideoCatalog) -> np.ndarray | float:
    """Rate needed for the chunk given cumulative quality indicators ``z``.

    Each active level contributes its increment over the level below, so a
    prefix ending at level j costs exactly r(j); an all-zero z costs nothing.
    """
    z = np.asarray(z, dtype=float)
    out = z @ catalog.increments
    return float(out) if np.ndim(out) == 0 else out


def level_rate(level, catalog: VideoCatalog) -> np.ndarray:
    """Vectorised required rate by selected level (-1 means idle)."""
    level = np.asarray(level)
    rates = np.concatenate([[0.0], catalog.rates])
    return rates[level + 1]


def step_rsu_queue(q, service, arrival):
    return np.maximum(np.asarray(q) - service, 0.0) + arrival


def step_free_queues(q_bv, q_sv, backhaul, sl_service, arrival):
    """RSU-side and SL-side queues of a relayed vehicle.

    The SL buffer only receives bits that actually left the RSU queue.
    """
    q_bv = np.asarray(q_bv, dtype=float)
    relayed = np.minimum(backhaul, q_bv)
    new_bv = np.maximum(q_bv - backhaul, 0.0) + arrival
    new_sv = np.maximum(np.asarray(q_sv, dtype=float) - sl_service, 0.0) + relayed
    return new_bv, new_sv


@dataclass(frozen=True)
class QueueState:
    q_b: np.ndarray  # RSU-side queue per vehicle
    q_s: np.ndarray  # SL-side queue per vehicle (zero unless relayed)
    vq: np.ndarray  # virtual queue: U for vehicles outside F, Y for relayed ones
    q_b0: np.ndarray  # reference initial RSU backlog
    q_s0: np.ndarray
    x_av: np.ndarray  # (V, M_rsu + M_sl) running average of RB indicators
    z_av: np.ndarray  # (V, J) running average of quality indicators
    t: int = 0

    @classmethod
    def initial(cls, num_vehicles: int, cfg: ScenarioConfig, catalog: VideoCatalog) -> "QueueState":
        """Every session starts with the reference backlog queued at the RSU."""
        q0 = np.full(num_vehicles, initial_backlog(cfg, catalog))
        zeros = np.zeros(num_vehicles)
        return cls(
            q_b=q0.copy(),
            q_s=zeros.copy(),
            vq=zeros.copy(),
            q_b0=q0,
            q_s0=zeros.copy(),
            x_av=np.zeros((num_vehicles, cfg.num_rbs_rsu + cfg.num_rbs_sl)),
            z_av=np.zeros((num_vehicles, catalog.num_levels)),
        )

    def U(self, free_mask: np.ndarray) -> np.ndarray:
        return np.where(free_mask, np.nan, self.vq)

    def Y(self, free_mask: np.ndarray) -> np.ndarray:
        return np.where(free_mask, self.vq, np.nan)


def initial_backlog(cfg: ScenarioConfig, catalog: VideoCatalog) -> float:
    """Reference backlog q(0) in bits: the playback threshold at the lowest
    rate plus one chunk at the highest.

    This keeps ``q(0) - playback_threshold * r`` positive for every level,
    which the Markov bound behind the virtual queues needs.
    """
    rates = catalog.rates
    return float(cfg.playback_threshold * rates[0] + catalog.chunk_duration * rates[-1])


def initial_content_seconds(cfg: ScenarioConfig, catalog: VideoCatalog) -> float:
    """Playback time represented by the reference backlog."""
    return cfg.playback_threshold + catalog.chunk_duration


def step_virtual_queues(
    state: QueueState,
    free_mask: np.ndarray,
    demand: np.ndarray,
    cfg: ScenarioConfig,
) -> QueueState:
    """Virtual-queue update after the actual queues were stepped.

    ``demand`` is the required rate in bit/s; ``state.q_*`` already hold
    q(t+1).
    """
    psi_bits = cfg.playback_threshold * np.asarray(demand, dtype=float)
    u = state.vq + state.q_b - cfg.epsilon * (state.q_b0 - psi_bits)
    y = state.vq + state.q_b + state.q_s - cfg.epsilon * (state.q_b0 + state.q_s0 - psi_bits)
    vq = np.maximum(np.where(free_mask, y, u), 0.0)
    return replace(state, vq=vq)


def update_running_averages(state: QueueState, x: np.ndarray, z: np.ndarray) -> QueueState:
    """Incremental mean over slots 0..t of the RB and quality indicators."""
    t = state.t + 1
    x_av = state.x_av + (np.asarray(x, float) - state.x_av) / t
    z_av = state.z_av + (np.asarray(z, float) - state.z_av) / t
    return replace(state, x_av=x_av, z_av=z_av, t=t)


@dataclass(frozen=True)
class PlaybackLedger:
    """Per-vehicle playback bookkeeping.

    ``delivered_seconds`` counts playback time of delivered content, so the
    buffered playback equals ``delivered_bits / demanded_rate - elapsed``
    whenever the content rate is constant.
    """

    delivered_bits: np.ndarray
    delivered_seconds: np.ndarray
    demanded_rate: np.ndarray
    elapsed: float = 0.0

    @classmethod
    def empty(cls, num_vehicles: int, demanded_rate) -> "PlaybackLedger":
        zeros = np.zeros(num_vehicles)
        return cls(zeros, zeros.copy(), np.broadcast_to(np.asarray(demanded_rate, float), (num_vehicles,)).copy())

    @property
    def buffered_playback(self) -> np.ndarray:
        return self.delivered_seconds - self.elapsed


def playback_ledger_step(
    ledger: PlaybackLedger,
    delivered_bits,
    slot_duration: float,
    content_rate=None,
    demanded_rate=None,
) -> PlaybackLedger:
    rate = ledger.demanded_rate if content_rate is None else np.asarray(content_rate, float)
    delivered_bits = np.asarray(delivered_bits, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        seconds = np.where(rate > 0, delivered_bits / rate, 0.0)
    return PlaybackLedger(
        delivered_bits=ledger.delivered_bits + delivered_bits,
        delivered_seconds=ledger.delivered_seconds + seconds,
        demanded_rate=ledger.demanded_rate if demanded_rate is None else np.asarray(demanded_rate, float),
        elapsed=ledger.elapsed + slot_duration,
    )


def reliability_estimate(buffered: np.ndarray, demanded: np.ndarray, threshold: float, warmup_slots: int = 0) -> float:
    """Fraction of post-warm-up (vehicle, slot) samples whose buffer is at most ``threshold``.

    Samples of vehicles with zero demanded rate are excluded.
    """
    buffered = np.asarray(buffered)[warmup_slots:]
    active = np.asarray(demanded)[warmup_slots:] > 0
    if not active.any():
        return float("nan")
    return float(np.mean(buffered[active] <= threshold))


def fifo_playback(
    arrivals: np.ndarray,
    arrival_rate: np.ndarray,
    delivered: np.ndarray,
    initial_bits,
    initial_seconds,
    slot_duration: float,
) -> np.ndarray:
    """Buffered playback (seconds) after every slot under FIFO delivery.

    ``arrivals[t, v]`` bits of content encoded at ``arrival_rate[t, v]``
    bit/s join the queue in slot t; ``delivered[t, v]`` bits reach the
    vehicle. The initial backlog holds ``initial_seconds`` of content.
    Delivered bits become playback seconds through the piecewise-linear
    cumulative bits-to-seconds map of the queued content.
    """
    arrivals = np.asarray(arrivals, float)
    T, V = arrivals.shape
    with np.errstate(divide="ignore", invalid="ignore"):
        seconds_in = np.where(arrival_rate > 0, arrivals / arrival_rate, 0.0)
    init_bits = np.broadcast_to(np.asarray(initial_bits, float), (V,))
    init_sec = np.broadcast_to(np.asarray(initial_seconds, float), (V,))
    cum_bits = np.vstack([np.zeros(V), init_bits, init_bits + np.cumsum(arrivals, axis=0)])
    cum_sec = np.vstack([np.zeros(V), init_sec, init_sec + np.cumsum(seconds_in, axis=0)])
    got = np.cumsum(np.asarray(delivered, float), axis=0)
    out = np.empty((T, V))
    elapsed = slot_duration * np.arange(1, T + 1)
    for v in range(V):
        out[:, v] = np.interp(got[:, v], cum_bits[:, v], cum_sec[:, v]) - elapsed
    return out


def fifo_latency(arrivals: np.ndarray, delivered: np.ndarray, initial_bits, slot_duration: float, start_slot: int = 0):
    """Queuing delay of every arrival batch under FIFO service.

    Bits arriving in slot t can leave from slot t + 1 on; the delay of the
    batch is measured to the slot in which its last bit departs. Batches
    from ``start_slot`` on are reported. Returns ``(delay_seconds, censored)``
    with both arrays shaped (T - start_slot, V); a censored batch had not
    fully departed by the end and carries the elapsed time as a lower bound.
    """
    arrivals = np.asarray(arrivals, float)
    T, V = arrivals.shape
    init_bits = np.broadcast_to(np.asarray(initial_bits, float), (V,))
    cum_in = init_bits + np.cumsum(arrivals, axis=0)
    cum_out = np.cumsum(np.asarray(delivered, float), axis=0)
    delay = np.empty((T - start_slot, V))
    censored = np.zeros((T - start_slot, V), dtype=bool)
    slots = np.arange(start_slot, T)
    for v in range(V):
        target = cum_in[start_slot:, v]
        # tolerate float round-off in the cumulative sums
        slack = 1e-9 * np.maximum(target, 1.0)
        leave = np.searchsorted(cum_out[:, v], target - slack, side="left")
        leave = np.maximum(leave, slots + 1)
        late = leave >= T
        censored[:, v] = late & (arrivals[start_slot:, v] > 0)
        delay[:, v] = (np.minimum(leave, T) - slots) * slot_duration
    return delay, censored
