import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from slicestream.model import ScenarioConfig, VideoCatalog, cumulative_indicator
from slicestream.queueing import (
    PlaybackLedger,
    QueueState,
    fifo_latency,
    fifo_playback,
    initial_backlog,
    level_rate,
    playback_ledger_step,
    reliability_estimate,
    required_rate,
    step_free_queues,
    step_rsu_queue,
    step_virtual_queues,
    update_running_averages,
)

bits = st.floats(0, 1e7, allow_nan=False)


def test_required_rate_examples(catalog):
    assert required_rate([1, 1, 1], catalog) == pytest.approx(1200e3)
    assert required_rate([1, 0, 0], catalog) == pytest.approx(400e3)
    assert required_rate([1, 1, 0], catalog) == pytest.approx(800e3)
    assert required_rate([0, 0, 0], catalog) == 0.0


@given(st.integers(-1, 2))
def test_telescoping_matches_level_rate(level):
    catalog = VideoCatalog()
    z = cumulative_indicator(level, 3)
    expected = 0.0 if level < 0 else catalog.rates[level]
    assert required_rate(z, catalog) == pytest.approx(expected)
    assert level_rate(level, catalog) == pytest.approx(expected)


def test_rsu_queue_examples():
    assert step_rsu_queue(5.0, 3.0, 2.0) == 4.0
    assert step_rsu_queue(1.0, 3.0, 2.0) == 2.0
    assert step_rsu_queue(7.0, 0.0, 0.0) == 7.0


def test_free_queue_examples():
    assert step_free_queues(10.0, 3.0, 4.0, 3.0, 2.0) == (8.0, 4.0)
    qb, qs = step_free_queues(2.0, 0.0, 5.0, 0.0, 1.0)
    assert (qb, qs) == (1.0, 2.0)  # only the 2 queued bits can be relayed
    assert step_free_queues(0.0, 0.0, 0.0, 0.0, 3.0) == (3.0, 0.0)


@given(bits, bits, bits)
def test_rsu_queue_nonnegative(q, s, a):
    assert step_rsu_queue(q, s, a) >= 0.0


@given(bits, bits, bits, bits, bits)
def test_free_queues_conserve_bits(qb, qs, r_bs, r_sv, a):
    new_b, new_s = step_free_queues(qb, qs, r_bs, r_sv, a)
    assert new_b >= 0 and new_s >= 0
    relayed = min(r_bs, qb)
    delivered = min(r_sv, qs)
    # bits in = bits out + change in storage
    assert new_b + new_s == pytest.approx(qb + qs + a - relayed + relayed - delivered, rel=1e-9, abs=1e-6)


def _state(vq, q_b, q_b0, q_s=0.0, q_s0=0.0):
    one = lambda v: np.array([float(v)])
    return QueueState(one(q_b), one(q_s), one(vq), one(q_b0), one(q_s0), np.zeros((1, 2)), np.zeros((1, 3)))


def test_virtual_queue_examples():
    cfg = ScenarioConfig(epsilon=0.1, playback_threshold=0.5)
    out = step_virtual_queues(_state(10, 5, 100), np.array([False]), np.array([100.0]), cfg)
    assert out.vq[0] == pytest.approx(10.0)
    out = step_virtual_queues(_state(0, 0, 100), np.array([False]), np.array([10.0]), cfg)
    assert out.vq[0] == 0.0
    out = step_virtual_queues(_state(0, 0, 100, 0, 50), np.array([True]), np.array([10.0]), cfg)
    assert out.vq[0] == max(-0.1 * (100 + 50 - 0.5 * 10), 0.0)


@given(st.floats(0, 1e8), st.floats(0, 1e8), st.floats(0, 1e8), st.floats(0, 1e7), st.booleans())
def test_virtual_queue_nonnegative(vq, qb, q0, demand, free):
    out = step_virtual_queues(_state(vq, qb, q0, qb / 2, q0 / 2), np.array([free]), np.array([demand]), ScenarioConfig())
    assert out.vq[0] >= 0.0


def test_running_average_examples():
    cfg, cat = ScenarioConfig(num_rbs_rsu=1, num_rbs_sl=1), VideoCatalog()
    s = QueueState.initial(1, cfg, cat)
    x = np.array([[1.0, 0.0]])
    z = np.array([[1.0, 1.0, 0.0]])
    s1 = update_running_averages(s, x, z)
    assert np.array_equal(s1.x_av, x) and np.array_equal(s1.z_av, z)
    for _ in range(9):
        s1 = update_running_averages(s1, x, z)
    assert np.allclose(s1.x_av, x)
    alt = s
    for t in range(1000):
        alt = update_running_averages(alt, np.array([[t % 2, 0.0]]), z)
    assert abs(alt.x_av[0, 0] - 0.5) <= 1e-3


def test_initial_backlog_keeps_markov_denominator_positive(catalog):
    cfg = ScenarioConfig()
    q0 = initial_backlog(cfg, catalog)
    assert np.all(q0 - cfg.playback_threshold * catalog.rates > 0)


def test_ledger_exact_delivery_keeps_buffer_empty():
    ledger = PlaybackLedger.empty(1, 1000.0)
    history, demand = [], []
    for _ in range(100):
        ledger = playback_ledger_step(ledger, [1.0], 1e-3)
        history.append(ledger.buffered_playback.copy())
        demand.append([1000.0])
    assert np.allclose(history, 0.0)
    assert reliability_estimate(np.array(history), np.array(demand), 0.5) == 1.0


def test_ledger_double_delivery_accumulates_time():
    ledger = PlaybackLedger.empty(1, 1000.0)
    for _ in range(500):
        ledger = playback_ledger_step(ledger, [2.0], 1e-3)
    assert ledger.buffered_playback[0] == pytest.approx(0.5)


def test_zero_demand_vehicles_are_excluded():
    buf = np.array([[0.0, 9.0], [0.0, 9.0]])
    dem = np.array([[0.0, 1.0], [0.0, 1.0]])
    assert reliability_estimate(buf, dem, 0.5) == 0.0
    assert np.isnan(reliability_estimate(buf, np.zeros_like(dem), 0.5))


def test_fifo_playback_matches_ledger_at_constant_rate():
    T, rate, dt = 200, 1000.0, 1e-3
    arrivals = np.full((T, 1), rate * dt)
    delivered = np.full((T, 1), 2 * rate * dt)
    delivered[100:] = 0.0
    out = fifo_playback(arrivals, np.full((T, 1), rate), delivered, 0.0, 0.0, dt)
    ledger = PlaybackLedger.empty(1, rate)
    for t in range(T):
        ledger = playback_ledger_step(ledger, delivered[t], dt)
        assert out[t, 0] == pytest.approx(ledger.buffered_playback[0], abs=1e-9)


def test_fifo_latency_unit_service():
    arrivals = np.array([[1.0], [1.0], [0.0], [0.0]])
    delivered = np.array([[0.0], [1.0], [1.0], [0.0]])
    delay, censored = fifo_latency(arrivals, delivered, 0.0, 1.0)
    assert delay[0, 0] == 1.0 and delay[1, 0] == 1.0
    assert not censored.any()


def test_littles_law_single_vehicle():
    rng = np.random.default_rng(5)
    T, p_arrive, p_serve = 200_000, 0.6, 0.8
    arrivals = (rng.random((T, 1)) < p_arrive).astype(float)
    capacity = (rng.random(T) < p_serve).astype(float)
    q, delivered, backlog = 0.0, np.zeros((T, 1)), np.zeros(T)
    for t in range(T):
        served = min(q, capacity[t])
        delivered[t, 0] = served
        q = step_rsu_queue(q, served, arrivals[t, 0])
        backlog[t] = q
    delay, censored = fifo_latency(arrivals, delivered, 0.0, 1.0)
    ok = (arrivals[:, 0] > 0) & ~censored[:, 0]
    mean_delay = delay[ok, 0].mean()
    assert backlog.mean() == pytest.approx(arrivals.mean() * mean_delay, rel=0.10)


@settings(max_examples=25)
@given(hnp.arrays(float, st.integers(5, 40), elements=st.floats(0, 10)), st.floats(0.5, 20))
def test_latency_at_least_one_slot(arr, cap):
    arrivals = arr[:, None]
    T = len(arr)
    q, delivered = 0.0, np.zeros((T, 1))
    for t in range(T):
        delivered[t, 0] = min(q, cap)
        q = q - delivered[t, 0] + arrivals[t, 0]
    delay, _ = fifo_latency(arrivals, delivered, 0.0, 1.0)
    assert np.all(delay >= 1.0) or T == 0
