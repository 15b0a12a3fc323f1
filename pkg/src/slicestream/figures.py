"""Render the plan-level figure tables to PNG files."""
from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 7,
    # fixed metadata keeps PNG bytes reproducible
    "savefig.dpi": 120,
}


def _rows(path: Path) -> list[dict]:
    if not path.exists():
        return []
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _save(fig, path: Path) -> None:
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def _curves(rows, xkey, ykey):
    out = defaultdict(lambda: ([], []))
    for r in rows:
        xs, ys = out[r["cell"]]
        xs.append(float(r[xkey]))
        ys.append(float(r[ykey]))
    return out


def render_all(directory: str | Path) -> list[Path]:
    """Draw fig3-fig6 from the merged tables in ``directory``; return written files."""
    d = Path(directory)
    written = []
    with plt.rc_context(STYLE):
        rows = _rows(d / "fig3_cdf.csv")
        if rows:
            fig, ax = plt.subplots()
            for cell, (xs, ys) in sorted(_curves(rows, "buffered_playback_s", "cdf").items()):
                ax.step(xs, ys, where="post", label=cell, lw=1)
            ax.set_xlabel("buffered playback (s)")
            ax.set_ylabel("CDF")
            ax.legend(loc="lower right")
            _save(fig, d / "fig3_cdf.png")
            written.append(d / "fig3_cdf.png")

        rows = _rows(d / "fig4_ccdf.csv")
        if rows:
            fig, ax = plt.subplots()
            for cell, (xs, ys) in sorted(_curves(rows, "latency_s", "ccdf").items()):
                ax.step([1e3 * x for x in xs], ys, where="post", label=cell, lw=1)
            ax.set_yscale("log")
            ax.set_xlabel("queuing latency (ms)")
            ax.set_ylabel("CCDF")
            ax.legend(loc="upper right")
            _save(fig, d / "fig4_ccdf.png")
            written.append(d / "fig4_ccdf.png")

        rows = _rows(d / "fig5_qoe.csv")
        if rows:
            by_sched = defaultdict(lambda: defaultdict(list))
            clusters = defaultdict(list)
            for r in rows:
                sigma = float(r["neighborhood_size_m"])
                by_sched[r["scheduler"]][sigma].append(float(r["network_qoe"]))
                if r["scheduler"] == "proposed":
                    clusters[sigma].append(float(r["mean_cluster_count"]))
            fig, ax = plt.subplots()
            for sched, pts in sorted(by_sched.items()):
                xs = sorted(pts)
                ax.plot(xs, [sum(pts[x]) / len(pts[x]) for x in xs], marker="o", label=sched)
            ax.set_xscale("log")
            ax.set_xlabel("neighborhood size (m)")
            ax.set_ylabel("network QoE")
            if clusters:
                twin = ax.twinx()
                xs = sorted(clusters)
                twin.plot(xs, [sum(clusters[x]) / len(clusters[x]) for x in xs], ls="--", color="grey", label="clusters")
                twin.set_ylabel("mean cluster count")
            ax.legend(loc="lower left")
            _save(fig, d / "fig5_qoe.png")
            written.append(d / "fig5_qoe.png")

        rows = _rows(d / "fig6_quality.csv")
        if rows:
            acc = defaultdict(lambda: defaultdict(list))
            levels: list[str] = []
            for r in rows:
                key = (r["scheduler"], float(r["vehicles_per_rsu"]))
                acc[key][r["level"]].append(float(r["fraction"]))
                if r["level"] not in levels:
                    levels.append(r["level"])
            keys = sorted(acc, key=lambda k: (k[1], k[0]))
            fig, ax = plt.subplots()
            bottom = [0.0] * len(keys)
            for level in levels:
                heights = [sum(acc[k][level]) / max(len(acc[k][level]), 1) for k in keys]
                ax.bar(range(len(keys)), heights, bottom=bottom, label=level)
                bottom = [b + h for b, h in zip(bottom, heights)]
            ax.set_xticks(range(len(keys)))
            ax.set_xticklabels([f"{s}\n{n:g}/RSU" for s, n in keys], fontsize=6)
            ax.set_ylabel("fraction of chunks")
            ax.legend(loc="upper right")
            _save(fig, d / "fig6_quality.png")
            written.append(d / "fig6_quality.png")
    return written
