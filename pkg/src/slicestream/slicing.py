"""Vehicle slicing: weak-vehicle detection, spectral clustering, leader election."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .channel import ChannelSnapshot
from .mobility import RsuSite, nearest_rsu, pairwise_distance
from .model import (
    RSU,
    SL,
    Link,
    RandomSource,
    ScenarioConfig,
    SlicePartition,
    check_partition,
)

log = logging.getLogger(__name__)

# eigenvalues below this fraction of the largest one count as zero
ZERO_EIGEN_RTOL = 1e-9
RESIDUAL_TOL = 1e-6


class ClusteringError(RuntimeError):
    pass


class PartitionError(ValueError):
    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("; ".join(violations))


@dataclass(frozen=True)
class SimilarityMatrix:
    ids: tuple[int, ...]
    entries: np.ndarray
    neighborhood: float


@dataclass(frozen=True)
class LaplacianSpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, ascending eigenvalue order


def weak_vehicle_set(snap: ChannelSnapshot, vehicles: Iterable[int], threshold_db: float) -> set[int]:
    sinr_db = snap.wideband_v2i_sinr_db()
    return {int(v) for v in vehicles if sinr_db[v] < threshold_db}


def build_similarity(
    positions: Mapping[int, Sequence[float]],
    neighborhood: float,
    squared: bool = False,
    length: float | None = None,
) -> SimilarityMatrix:
    if not neighborhood > 0:
        raise ValueError("neighborhood size must be > 0")
    ids = tuple(sorted(positions))
    pts = np.array([positions[i] for i in ids], dtype=float).reshape(len(ids), 2)
    if length is None:
        dist = np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1))
    else:
        dist = pairwise_distance(pts, pts, length)
    if squared:
        dist = dist**2
    entries = np.exp(-dist / (2.0 * neighborhood**2))
    np.fill_diagonal(entries, 1.0)
    return SimilarityMatrix(ids, entries, float(neighborhood))


def laplacian(sim: SimilarityMatrix) -> np.ndarray:
    w = sim.entries.copy()
    np.fill_diagonal(w, 0.0)
    return np.diag(w.sum(axis=1)) - w


def laplacian_spectrum(sim: SimilarityMatrix) -> LaplacianSpectrum:
    lap = laplacian(sim)
    try:
        values, vectors = np.linalg.eigh(lap)
    except np.linalg.LinAlgError as exc:
        raise ClusteringError(f"eigensolver failed: {exc}") from exc
    residual = np.linalg.norm(lap @ vectors - vectors * values)
    scale = max(1.0, float(np.abs(values).max(initial=0.0)))
    if not np.isfinite(residual) or residual > RESIDUAL_TOL * scale * len(values):
        raise ClusteringError(f"eigensolver did not converge, residual norm {residual:.3e}")
    return LaplacianSpectrum(values, vectors)


def choose_k(spectrum: LaplacianSpectrum | Sequence[float]) -> int:
    """Eigengap rule: 1-based index of the largest gap between consecutive eigenvalues."""
    values = np.asarray(
        spectrum.eigenvalues if isinstance(spectrum, LaplacianSpectrum) else spectrum, dtype=float
    )
    if values.size < 2:
        raise ValueError("insufficient spectrum")
    values = np.sort(values)
    top = np.abs(values).max()
    if top == 0.0:
        # no edges at all: every vertex is its own component
        return int(values.size)
    values = np.where(np.abs(values) < ZERO_EIGEN_RTOL * top, 0.0, values)
    return int(np.argmax(np.diff(values))) + 1


def kmeans(points: np.ndarray, k: int, rng: RandomSource, restarts: int = 50, max_iter: int = 300) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding; best of ``restarts`` by inertia."""
    n = len(points)
    if k >= n:
        return np.arange(n)
    best_labels, best_inertia = None, np.inf
    for _ in range(restarts):
        centers = _kmeans_pp(points, k, rng)
        labels = np.full(n, -1)
        for _ in range(max_iter):
            d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new = np.argmin(d2, axis=1)
            if np.array_equal(new, labels):
                break
            labels = new
            for c in range(k):
                members = points[labels == c]
                if len(members):
                    centers[c] = members.mean(axis=0)
                else:
                    # reseed an empty cluster at the worst-served point
                    far = int(np.argmax(d2[np.arange(n), labels]))
                    centers[c] = points[far]
        inertia = float(((points - centers[labels]) ** 2).sum())
        if inertia < best_inertia - 1e-12:
            best_inertia, best_labels = inertia, labels.copy()
    return best_labels


def _kmeans_pp(points: np.ndarray, k: int, rng: RandomSource) -> np.ndarray:
    n = len(points)
    centers = [points[rng.integers(n)]]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centers.append(points[idx])
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centers, dtype=float)


def spectral_cluster(sim: SimilarityMatrix, rng: RandomSource, restarts: int = 50) -> list[frozenset[int]]:
    ids = sim.ids
    if len(ids) == 0:
        return []
    if len(ids) == 1:
        return [frozenset(ids)]
    spectrum = laplacian_spectrum(sim)
    k = choose_k(spectrum)
    embedding = spectrum.eigenvectors[:, :k]
    labels = kmeans(embedding, k, rng, restarts=restarts)
    groups: dict[int, set[int]] = {}
    for vid, label in zip(ids, labels):
        groups.setdefault(int(label), set()).add(vid)
    return sorted((frozenset(g) for g in groups.values()), key=min)


def ring_centroid(points: np.ndarray, length: float) -> np.ndarray:
    """Mean position, unwrapping x around the first member on the ring."""
    ref = points[0, 0]
    dx = (points[:, 0] - ref + length / 2.0) % length - length / 2.0
    return np.array([(ref + dx.mean()) % length, points[:, 1].mean()])


def elect_leaders(
    clusters: Sequence[Iterable[int]],
    positions: Mapping[int, Sequence[float]],
    free: Iterable[int],
    length: float | None = None,
) -> dict[int, int]:
    """Nearest non-free vehicle to each cluster centroid, one cluster per leader.

    Conflicts are resolved greedily in ascending distance order. Clusters left
    without a candidate are absent from the result.
    """
    free = set(free)
    clusters = [sorted(c) for c in clusters]
    if not clusters:
        return {}
    candidates = sorted(set(positions) - free)
    if len(candidates) < len(clusters):
        log.warning("not enough leader candidates: %d for %d clusters", len(candidates), len(clusters))
    if not candidates:
        return {}
    span = length if length is not None else np.inf
    centroids = []
    for members in clusters:
        pts = np.array([positions[v] for v in members], dtype=float)
        centroids.append(ring_centroid(pts, span) if length is not None else pts.mean(axis=0))
    cand_pts = np.array([positions[v] for v in candidates], dtype=float)
    centroids = np.array(centroids)
    if length is None:
        dist = np.hypot(*(centroids[:, None, :] - cand_pts[None, :, :]).transpose(2, 0, 1))
    else:
        dist = pairwise_distance(centroids, cand_pts, length)
    order = sorted(
        ((dist[i, j], i, candidates[j]) for i in range(len(clusters)) for j in range(len(candidates)))
    )
    leaders: dict[int, int] = {}
    taken: set[int] = set()
    for _, i, cand in order:
        if i in leaders or cand in taken:
            continue
        leaders[i] = cand
        taken.add(cand)
        if len(leaders) == len(clusters):
            break
    return leaders


def make_partition(
    clusters: Sequence[Iterable[int]],
    leaders: Mapping[int, int],
    all_vehicles: Iterable[int],
    serving_rsu: Mapping[int, int],
) -> SlicePartition:
    """Assemble the (S, F, C) partition; clusters without a leader become compelled."""
    vehicles = set(all_vehicles)
    free: dict[int, frozenset[int]] = {}
    for i, members in enumerate(clusters):
        if i in leaders:
            free[leaders[i]] = frozenset(members)
    leaders_set = frozenset(free)
    free_all = set().union(*free.values()) if free else set()
    compelled = frozenset(vehicles - free_all - leaders_set)
    links: dict[int, Link] = {}
    for v in vehicles:
        if v in free_all:
            links[v] = Link(SL, next(s for s, m in free.items() if v in m))
        else:
            links[v] = Link(RSU, int(serving_rsu[v]))
    partition = SlicePartition(leaders_set, free, compelled, links)
    violations = check_partition(partition, vehicles)
    if violations:
        raise PartitionError(violations)
    return partition


@dataclass(frozen=True)
class SlicingOutcome:
    partition: SlicePartition
    clusters: tuple[frozenset[int], ...]
    weak: frozenset[int]
    dissolved: int


def reslice(
    snap: ChannelSnapshot,
    positions: np.ndarray,
    rsus: Sequence[RsuSite],
    cfg: ScenarioConfig,
    rng: RandomSource,
) -> SlicingOutcome:
    """Weak set, per-RSU spectral clustering, then network-wide leader election."""
    n = len(positions)
    vehicles = range(n)
    serving = nearest_rsu(positions, rsus, cfg.highway_length)
    serving_map = {v: int(serving[v]) for v in vehicles}
    weak = weak_vehicle_set(snap, vehicles, cfg.weak_sinr_threshold_db)
    clusters: list[frozenset[int]] = []
    for b in range(len(rsus)):
        members = sorted(v for v in weak if serving_map[v] == b)
        if not members:
            continue
        sim = build_similarity(
            {v: positions[v] for v in members},
            cfg.neighborhood_size,
            squared=cfg.squared_kernel,
            length=cfg.highway_length,
        )
        clusters.extend(spectral_cluster(sim, rng, restarts=cfg.kmeans_restarts))
    pos_map = {v: positions[v] for v in vehicles}
    leaders = elect_leaders(clusters, pos_map, weak, cfg.highway_length)
    partition = make_partition(clusters, leaders, vehicles, serving_map)
    return SlicingOutcome(partition, tuple(clusters), frozenset(weak), len(clusters) - len(leaders))


def partition_rows(epoch: int, partition: SlicePartition):
    for v in sorted(partition.links):
        link = partition.links[v]
        yield (epoch, v, partition.role(v), f"{link.kind}{link.node}")


def write_partition_trace(path: str | Path, rows: Iterable[tuple]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "vehicle", "role", "serving_node"])
        writer.writerows(rows)
