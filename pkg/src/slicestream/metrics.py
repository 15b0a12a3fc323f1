"""Evaluation statistics computed from persisted run series.

Every function here is a pure function of the arrays a run writes to disk,
so reloading a run reproduces the in-run numbers exactly.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import RandomSource, ScenarioConfig, VideoCatalog
from .queueing import fifo_latency, fifo_playback, initial_backlog, initial_content_seconds, level_rate
from .scheduler import qoe_objective


@dataclass(frozen=True)
class EmpiricalDistribution:
    samples: np.ndarray  # sorted

    def __post_init__(self):
        if self.samples.size == 0:
            raise ValueError("empty sample set")

    def cdf(self, query):
        return np.searchsorted(self.samples, query, side="right") / self.samples.size

    def ccdf(self, query):
        return 1.0 - self.cdf(query)

    def quantile(self, p):
        return np.quantile(self.samples, p)

    def grid(self, points: int = 200) -> np.ndarray:
        lo, hi = float(self.samples[0]), float(self.samples[-1])
        return np.linspace(lo, hi, points) if hi > lo else np.array([lo])


def cdf(samples) -> EmpiricalDistribution:
    arr = np.sort(np.asarray(samples, dtype=float).ravel())
    return EmpiricalDistribution(arr)


ccdf = cdf


@dataclass(frozen=True)
class QualityHistogram:
    labels: tuple[str, ...]
    fractions: np.ndarray  # per level, then the idle bucket

    def fraction(self, label: str) -> float:
        return float(self.fractions[self.labels.index(label)])

    @property
    def top(self) -> float:
        return float(self.fractions[-2])


@dataclass(frozen=True)
class RunSeries:
    """Arrays a run persists; everything downstream is derived from them."""

    levels: np.ndarray  # (chunks, V) level per chunk, -1 idle
    delivered: np.ndarray  # (T, V) bits reaching each vehicle per slot
    cluster_counts: np.ndarray  # (epochs,) clusters formed per re-slicing epoch

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name in ("levels", "delivered", "cluster_counts"):
            np.save(directory / f"{name}.npy", getattr(self, name), allow_pickle=False)

    @classmethod
    def load(cls, directory: str | Path) -> "RunSeries":
        directory = Path(directory)
        return cls(*(np.load(directory / f"{n}.npy") for n in ("levels", "delivered", "cluster_counts")))


def slot_rates(levels: np.ndarray, slots: int, cfg: ScenarioConfig, catalog: VideoCatalog) -> np.ndarray:
    """Content rate (bit/s) arriving in every slot, from per-chunk levels."""
    chunk_slots = int(round(catalog.chunk_duration / cfg.slot_duration))
    chunk = np.minimum(np.arange(slots) // chunk_slots, len(levels) - 1)
    return level_rate(levels[chunk], catalog) if slots else np.zeros((0, levels.shape[1]))


def buffered_playback(series: RunSeries, cfg: ScenarioConfig, catalog: VideoCatalog) -> np.ndarray:
    T = series.delivered.shape[0]
    rate = slot_rates(series.levels, T, cfg, catalog)
    return fifo_playback(
        rate * cfg.slot_duration,
        rate,
        series.delivered,
        initial_backlog(cfg, catalog),
        initial_content_seconds(cfg, catalog),
        cfg.slot_duration,
    )


def warmup_slots(cfg: ScenarioConfig) -> int:
    return int(round(cfg.warmup_seconds / cfg.slot_duration))


def violation_fraction(series: RunSeries, cfg: ScenarioConfig, catalog: VideoCatalog) -> float:
    """Post-warm-up share of (vehicle, slot) samples with buffer at most the threshold."""
    T = series.delivered.shape[0]
    buf = buffered_playback(series, cfg, catalog)
    active = slot_rates(series.levels, T, cfg, catalog) > 0
    w = warmup_slots(cfg)
    sel = active[w:]
    if not sel.any():
        return float("nan")
    return float(np.mean(buf[w:][sel] <= cfg.playback_threshold))


def latency_samples(series: RunSeries, cfg: ScenarioConfig, catalog: VideoCatalog) -> np.ndarray:
    """Per-batch FIFO queuing delays (seconds) of post-warm-up arrivals."""
    T = series.delivered.shape[0]
    w = min(warmup_slots(cfg), T)
    rate = slot_rates(series.levels, T, cfg, catalog)
    delay, _ = fifo_latency(rate * cfg.slot_duration, series.delivered, initial_backlog(cfg, catalog), cfg.slot_duration, w)
    return delay[rate[w:] > 0]


def quality_distribution(levels: np.ndarray, catalog: VideoCatalog) -> QualityHistogram:
    levels = np.asarray(levels, dtype=int).ravel()
    labels = tuple(catalog.labels) + ("idle",)
    counts = np.array([np.sum(levels == j) for j in range(catalog.num_levels)] + [np.sum(levels < 0)], float)
    return QualityHistogram(labels, counts / max(levels.size, 1))


def qoe_report(series: RunSeries, cfg: ScenarioConfig, catalog: VideoCatalog) -> dict:
    """Exact-indicator QoE per vehicle and for the network, plus cluster counts."""
    _, per_vehicle, network = qoe_objective(series.levels, cfg, catalog.num_levels)
    counts = series.cluster_counts
    return {
        "per_vehicle": per_vehicle,
        "network_qoe": network,
        "mean_qoe_per_chunk": network / max(series.levels.size, 1),
        "mean_cluster_count": float(counts.mean()) if counts.size else 0.0,
    }


def bootstrap_ci(values: Sequence[float], rng: RandomSource, resamples: int = 1000, level: float = 0.95):
    """Percentile bootstrap interval of the mean of per-replication statistics."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("no replications")
    idx = rng.integers(0, values.size, size=(resamples, values.size))
    means = values[idx].mean(axis=1)
    tail = (1.0 - level) / 2.0
    return float(np.quantile(means, tail)), float(np.quantile(means, 1.0 - tail))


def summarize(series: RunSeries, cfg: ScenarioConfig, catalog: VideoCatalog) -> dict:
    lat = latency_samples(series, cfg, catalog)
    report = qoe_report(series, cfg, catalog)
    hist = quality_distribution(series.levels, catalog)
    return {
        "network_qoe": report["network_qoe"],
        "mean_qoe_per_chunk": report["mean_qoe_per_chunk"],
        "violation_fraction": violation_fraction(series, cfg, catalog),
        "latency_mean_s": float(lat.mean()) if lat.size else float("nan"),
        "latency_median_s": float(np.median(lat)) if lat.size else float("nan"),
        "latency_p99_s": float(np.quantile(lat, 0.99)) if lat.size else float("nan"),
        "mean_cluster_count": report["mean_cluster_count"],
        "quality_fractions": {l: float(f) for l, f in zip(hist.labels, hist.fractions)},
    }


# ---------------------------------------------------------------------------
# delimited outputs
# ---------------------------------------------------------------------------

FIG3_HEADER = ["cell", "buffered_playback_s", "cdf"]
FIG4_HEADER = ["cell", "latency_s", "ccdf"]
FIG5_HEADER = ["cell", "scheduler", "neighborhood_size_m", "network_qoe", "mean_cluster_count"]
FIG6_HEADER = ["cell", "scheduler", "vehicles_per_rsu", "level", "fraction"]


def _write(path: Path, header: list[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def distribution_rows(cell: str, dist: EmpiricalDistribution, complement: bool, points: int = 200):
    grid = dist.grid(points)
    values = dist.ccdf(grid) if complement else dist.cdf(grid)
    return [(cell, _fmt(x), _fmt(y)) for x, y in zip(grid, values)]


def write_cell_reports(
    directory: str | Path,
    cell: str,
    scheduler: str,
    series: RunSeries,
    cfg: ScenarioConfig,
    catalog: VideoCatalog,
    vehicles_per_rsu: float,
    extra: Mapping | None = None,
) -> dict:
    """Write fig3-fig6 tables and summary.json for one cell; return the summary."""
    directory = Path(directory)
    T = series.delivered.shape[0]
    summary = summarize(series, cfg, catalog) if T else {}
    w = min(warmup_slots(cfg), T)
    fig3, fig4 = [], []
    if T > w:
        buf = buffered_playback(series, cfg, catalog)[w:].ravel()
        fig3 = distribution_rows(cell, cdf(buf), complement=False)
        lat = latency_samples(series, cfg, catalog)
        if lat.size:
            fig4 = distribution_rows(cell, ccdf(lat), complement=True)
    _write(directory / "fig3_cdf.csv", FIG3_HEADER, fig3)
    _write(directory / "fig4_ccdf.csv", FIG4_HEADER, fig4)
    report = qoe_report(series, cfg, catalog) if series.levels.size else {"network_qoe": 0.0, "mean_cluster_count": 0.0}
    _write(
        directory / "fig5_qoe.csv",
        FIG5_HEADER,
        [(cell, scheduler, _fmt(cfg.neighborhood_size), _fmt(report["network_qoe"]), _fmt(report["mean_cluster_count"]))],
    )
    hist = quality_distribution(series.levels, catalog)
    _write(
        directory / "fig6_quality.csv",
        FIG6_HEADER,
        [(cell, scheduler, _fmt(vehicles_per_rsu), l, _fmt(f)) for l, f in zip(hist.labels, hist.fractions)],
    )
    summary = {"cell": cell, "scheduler": scheduler, "vehicles_per_rsu": vehicles_per_rsu, **summary, **(extra or {})}
    (directory / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary


def merge_tables(cell_dirs: Sequence[Path], out_dir: Path) -> None:
    """Concatenate per-cell figure tables into plan-level files (cell order)."""
    for name, header in (
        ("fig3_cdf.csv", FIG3_HEADER),
        ("fig4_ccdf.csv", FIG4_HEADER),
        ("fig5_qoe.csv", FIG5_HEADER),
        ("fig6_quality.csv", FIG6_HEADER),
    ):
        rows = []
        for d in cell_dirs:
            path = Path(d) / name
            if path.exists():
                with open(path, newline="", encoding="utf-8") as fh:
                    reader = csv.reader(fh)
                    next(reader, None)
                    rows.extend(reader)
        _write(out_dir / name, header, rows)
