import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slicestream.metrics import (
    RunSeries,
    bootstrap_ci,
    cdf,
    ccdf,
    qoe_report,
    quality_distribution,
    summarize,
    violation_fraction,
)
from slicestream.model import RandomSource, ScenarioConfig


def test_cdf_examples():
    d = cdf([1, 2, 3])
    assert d.cdf(2) == pytest.approx(2 / 3)
    assert d.cdf(0.5) == 0.0
    assert d.cdf(3) == 1.0
    assert ccdf([1, 2, 3]).ccdf(2) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        cdf([])


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50), st.floats(-1e6, 1e6), st.floats(0, 1e6))
def test_cdf_monotone_and_bounded(samples, x, dx):
    d = cdf(samples)
    assert 0.0 <= d.cdf(x) <= d.cdf(x + dx) <= 1.0


def test_quality_distribution_with_idle_bucket(catalog):
    hist = quality_distribution(np.array([[0, 2], [2, -1]]), catalog)
    assert hist.labels == ("240p", "360p", "720p", "idle")
    assert np.allclose(hist.fractions, [0.25, 0.0, 0.5, 0.25])
    assert hist.top == 0.5 and hist.fraction("idle") == 0.25


def test_bootstrap_interval_contains_mean():
    vals = [1.0, 2.0, 3.0, 4.0, 5.0]
    lo, hi = bootstrap_ci(vals, RandomSource(1, RandomSource.BOOTSTRAP))
    assert lo <= 3.0 <= hi and lo >= 1.0 and hi <= 5.0
    assert bootstrap_ci([2.0] * 5, RandomSource(1)) == (2.0, 2.0)
    with pytest.raises(ValueError):
        bootstrap_ci([], RandomSource(1))


def _series(cfg, catalog, rate_factor):
    T = int(round(cfg.duration / cfg.slot_duration))
    chunks = int(np.ceil(cfg.duration / catalog.chunk_duration))
    levels = np.full((chunks, 2), 0)
    delivered = np.full((T, 2), rate_factor * catalog.rates[0] * cfg.slot_duration)
    return RunSeries(levels, delivered, np.array([2, 3]))


def test_ample_delivery_never_violates(catalog):
    cfg = ScenarioConfig(duration=3.0)
    s = _series(cfg, catalog, 10.0)  # clears the initial backlog inside warm-up
    assert violation_fraction(s, cfg, catalog) == 0.0
    out = summarize(s, cfg, catalog)
    assert out["mean_cluster_count"] == 2.5
    assert out["quality_fractions"]["240p"] == 1.0


def test_starved_delivery_violates(catalog):
    cfg = ScenarioConfig(duration=6.0)
    assert violation_fraction(_series(cfg, catalog, 0.0), cfg, catalog) > 0.5


def test_qoe_report_reload_matches(tmp_path, catalog):
    cfg = ScenarioConfig(duration=2.0)
    s = _series(cfg, catalog, 1.0)
    s.save(tmp_path)
    again = RunSeries.load(tmp_path)
    assert qoe_report(again, cfg, catalog)["network_qoe"] == qoe_report(s, cfg, catalog)["network_qoe"]


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40), st.lists(st.floats(-2e3, 2e3), max_size=10))
def test_cdf_and_ccdf_complement(samples, queries):
    d = cdf(samples)
    q = np.array(queries)
    assert np.allclose(d.cdf(q) + d.ccdf(q), 1.0, rtol=0, atol=1e-15)


@given(st.lists(st.integers(-1, 2), min_size=1, max_size=60))
def test_histogram_mass_is_one(levels):
    from slicestream.model import VideoCatalog

    hist = quality_distribution(np.array(levels), VideoCatalog())
    assert abs(hist.fractions.sum() - 1.0) <= 1e-12
