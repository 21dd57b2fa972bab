"""Corrected sample weights for biased datasets.

Two tools: crash weights for re-simulated seed cases (each seed's weight is
spread over the crashes it produced) and a one-dimensional k-nearest-neighbour
density-ratio reweighting that pulls a synthetic sample toward a reference
distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .dataset import MetricDataset, normalize_weights


@dataclass(frozen=True)
class ScmSeedRecord:
    seed_id: str
    omega_seed: float
    n_sim: int
    n_crash: int

    def __post_init__(self):
        if not (math.isfinite(self.omega_seed) and self.omega_seed >= 0):
            raise ValueError(f"seed {self.seed_id}: weight must be finite and non-negative")
        if not 0 <= self.n_crash <= self.n_sim:
            raise ValueError(f"seed {self.seed_id}: need 0 <= n_crash <= n_sim")


@dataclass(frozen=True)
class ScmWeights:
    """Per-crash weight of every seed that produced at least one crash."""

    seed_ids: tuple[str, ...]
    weight: np.ndarray  # one weight per seed, shared by all of its crashes
    n_crash: np.ndarray
    total: int

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.seed_ids, map(float, self.weight)))

    def per_crash(self) -> np.ndarray:
        """Weights expanded to one entry per crash, seeds in input order."""
        return np.repeat(self.weight, self.n_crash)

    def weight_sum(self) -> float:
        return math.fsum(self.per_crash())


def scm_resim_weights(seeds, total_crashes: int | None = None) -> ScmWeights:
    """Crash weights proportional to ``omega_seed / n_crash``, scaled to sum to the crash count.

    Seeds without crashes are dropped. ``total_crashes``, when given, must
    equal the sum of ``n_crash``.
    """
    seeds = [s for s in seeds if s.n_crash > 0]
    if not seeds:
        raise ValueError("no seed produced a crash")
    n_crash = np.array([s.n_crash for s in seeds], dtype=np.int64)
    total = int(n_crash.sum())
    if total_crashes is not None and int(total_crashes) != total:
        raise ValueError(f"total_crashes={total_crashes} but seeds report {total} crashes")
    omega = np.array([s.omega_seed for s in seeds], dtype=float)
    omega_sum = math.fsum(omega)
    if not omega_sum > 0:
        raise ValueError("all crash-producing seeds have zero weight")
    # sum over crashes of c * omega_i / n_i is c * sum(omega), so c = total / sum(omega)
    weight = total * omega / (n_crash * omega_sum)
    return ScmWeights(tuple(s.seed_id for s in seeds), weight, n_crash, total)


def _kth_distance(tree: cKDTree, x: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    dist, idx = tree.query(x[:, None], k=k)
    if k == 1:
        dist, idx = dist[:, None], idx[:, None]
    return dist, idx


def knn_density(points: np.ndarray, query: np.ndarray, k: int, weights=None, floor: float = 0.0) -> np.ndarray:
    """k-NN density estimate ``mass(k nearest) / (2 * d_k)`` in one dimension.

    With ``weights`` the neighbour mass is the weight share of the ``k``
    nearest points; without, it is ``k / n``.
    """
    points = np.asarray(points, dtype=float)
    query = np.asarray(query, dtype=float)
    k = min(k, points.size)
    dist, idx = _kth_distance(cKDTree(points[:, None]), query, k)
    dk = np.maximum(dist[:, -1], floor)
    if weights is None:
        mass = k / points.size
    else:
        w = np.asarray(weights, dtype=float)
        mass = w[idx].sum(axis=1) / w.sum()
    return mass / (2.0 * dk)


def knn_reweight(syn: MetricDataset, ref: MetricDataset, k: int) -> MetricDataset:
    """Importance weights ``rho_ref(x) / rho_syn(x)`` from k-NN densities.

    Both densities count the query point's own set inclusively, so a
    synthetic sample identical to the reference gets uniform weights.
    Distances are floored at ``1e-9`` times the pooled data range to survive
    duplicates. The result is normalized to sum to ``n``.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    x = syn.values
    pooled = np.concatenate([x, ref.values])
    span = float(np.ptp(pooled))
    floor = 1e-9 * span if span > 0 else 1e-300
    rho_ref = knn_density(ref.values, x, k, weights=ref.weights, floor=floor)
    rho_syn = knn_density(x, x, k, floor=floor)
    w = rho_ref / rho_syn
    # a reference density of exactly zero cannot occur with k >= 1, but guard the ratio anyway
    w = np.maximum(w, np.finfo(float).tiny)
    return normalize_weights(syn.with_weights(w), "sum_to_n")


def weighted_ks_distance(a: MetricDataset, b: MetricDataset) -> float:
    """Kolmogorov-Smirnov distance between two weighted empirical CDFs."""
    grid = np.union1d(a.values, b.values)

    def ecdf(d):
        o = np.argsort(d.values, kind="stable")
        cw = np.cumsum(d.weights[o]) / d.weights.sum()
        pos = np.searchsorted(d.values[o], grid, side="right")
        return np.where(pos > 0, cw[np.maximum(pos - 1, 0)], 0.0)

    return float(np.max(np.abs(ecdf(a) - ecdf(b))))


__all__ = [
    "ScmSeedRecord",
    "ScmWeights",
    "knn_density",
    "knn_reweight",
    "scm_resim_weights",
    "weighted_ks_distance",
]
