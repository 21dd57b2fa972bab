"""Reference-quantile bin partitions, bin proportions and relevance weights.

Every posterior draw of the reference model defines its own partition: the
``N - 1`` interior cut points are that draw's quantiles at ``i / N``. Bin
proportions come from the predictive CDFs, so the reference proportions are
``1 / N`` up to CDF/quantile rounding. Outcome means per bin always come from
the reference samples, assigned to the draw-specific bins (a sample equal to
a cut point belongs to the lower bin).

Functions accept one draw (1-D boundaries) or a stack of draws (2-D,
``(S, N - 1)``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import MetricDataset


@dataclass(frozen=True)
class BinWeightConfig:
    P0: float = 0.02
    epsilon: float = 1e-4
    omega_b: float = 1.0

    def __post_init__(self):
        if not self.P0 > 0 or not self.epsilon > 0:
            raise ValueError("P0 and epsilon must be positive")


@dataclass(frozen=True, eq=False)
class BinPartition:
    """Binning of one draw pair (or a stack of draw pairs along axis 0)."""

    boundaries: np.ndarray
    p_ref: np.ndarray
    p_syn: np.ndarray
    mean_outcome: np.ndarray
    omega: np.ndarray

    @property
    def N(self) -> int:
        return int(self.p_ref.shape[-1])

    @property
    def delta(self) -> np.ndarray:
        return self.p_syn - self.p_ref


def choose_bin_count(n: int, m: int, N_max: int) -> int:
    """``min(floor(n / m), N_max)``: at least ``m`` reference samples per bin."""
    if m < 1 or N_max < 1:
        raise ValueError("m and N_max must be at least 1")
    if n < m:
        raise ValueError(f"n={n} reference samples cannot fill one bin of m={m}")
    return min(n // m, N_max)


def partition(ref_draw, N: int) -> np.ndarray:
    """Interior cut points ``quantile(i / N)``, ``i = 1..N-1``.

    ``ref_draw`` is anything with a vectorized ``quantile`` method: a
    :class:`~binequiv.bayes.PosteriorDraw` gives shape ``(N - 1,)``, a
    :class:`~binequiv.bayes.FittedModel` gives ``(S, N - 1)``.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    q = np.arange(1, N) / N
    if N == 1:
        b = np.asarray(ref_draw.quantile(np.array([0.5])))
        return b[..., :0]
    b = np.asarray(ref_draw.quantile(q), dtype=float)
    if not np.all(np.isfinite(b)):
        raise ValueError("non-finite quantile in bin partition")
    if b.shape[-1] > 1 and not np.all(np.diff(b, axis=-1) > 0):
        raise ValueError("bin boundaries are not strictly increasing")
    return b


def bin_proportions(draw, boundaries) -> np.ndarray:
    """``CDF(b_i) - CDF(b_{i-1})`` with ``b_0 = -inf`` and ``b_N = +inf``."""
    b = np.asarray(boundaries, dtype=float)
    F = np.asarray(draw.cdf(b), dtype=float) if b.shape[-1] else np.zeros(b.shape)
    lead = F.shape[:-1]
    F = np.concatenate([np.zeros(lead + (1,)), F, np.ones(lead + (1,))], axis=-1)
    return np.diff(F, axis=-1)


def _canonical_order(ref: MetricDataset):
    o = ref.outcomes
    idx = np.lexsort((o, ref.weights, ref.values))
    return ref.values[idx], ref.weights[idx], o[idx]


def per_bin_mean_outcome(ref: MetricDataset, boundaries) -> np.ndarray:
    """Weighted mean re-simulated outcome of the reference samples per bin.

    Bins are ``(b_{i-1}, b_i]``; a bin holding no positive weight gets 0.
    """
    if ref.outcomes is None or np.any(np.isnan(ref.outcomes)):
        raise ValueError(f"{ref.metric_id}: every reference sample needs an outcome")
    b = np.asarray(boundaries, dtype=float)
    x, w, o = _canonical_order(ref)
    cw = np.concatenate([[0.0], np.cumsum(w)])
    cwo = np.concatenate([[0.0], np.cumsum(w * o)])
    cut = np.searchsorted(x, b, side="right")
    lead = cut.shape[:-1]
    edges = np.concatenate(
        [np.zeros(lead + (1,), dtype=np.intp), cut, np.full(lead + (1,), x.size, dtype=np.intp)], axis=-1
    )
    lo, hi = edges[..., :-1], edges[..., 1:]
    mass = cw[hi] - cw[lo]
    tot = cwo[hi] - cwo[lo]
    empty = (hi == lo) | ~(mass > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(empty, 0.0, tot / np.where(empty, 1.0, mass))
    return np.clip(mean, 0.0, 1.0)


def bin_weights(mean_outcome, cfg: BinWeightConfig | None = None) -> np.ndarray:
    """Relevance weight ``(P + eps) / (P0 + eps)``; equals 1 at ``P = P0``."""
    cfg = cfg or BinWeightConfig()
    p = np.asarray(mean_outcome, dtype=float)
    return cfg.omega_b * (p + cfg.epsilon) / (cfg.P0 + cfg.epsilon)


def injury_risk(delta_v):
    """Logistic MAIS2+ risk of the lead-vehicle driver for speed change ``delta_v`` [m/s]."""
    dv = np.asarray(delta_v, dtype=float)
    if np.any(dv < 0) or np.any(np.isnan(dv)):
        raise ValueError("delta_v must be non-negative")
    out = 1.0 / (1.0 + np.exp(6.1818 - 0.3315 * dv))
    return float(out) if out.ndim == 0 else out


def empirical_proportions(d: MetricDataset, boundaries) -> np.ndarray:
    """Weighted share of raw samples per bin (diagnostic mode, no model)."""
    b = np.asarray(boundaries, dtype=float)
    idx = np.argsort(d.values, kind="stable")
    x, w = d.values[idx], d.weights[idx]
    cw = np.concatenate([[0.0], np.cumsum(w)])
    cut = np.searchsorted(x, b, side="right")
    lead = cut.shape[:-1]
    edges = np.concatenate(
        [np.zeros(lead + (1,), dtype=np.intp), cut, np.full(lead + (1,), x.size, dtype=np.intp)], axis=-1
    )
    return (cw[edges[..., 1:]] - cw[edges[..., :-1]]) / cw[-1]


def build_partition(ref_model, syn_model, ref_data: MetricDataset, N: int, bw: BinWeightConfig) -> BinPartition:
    """Bin every paired draw: boundaries, proportions, outcomes, weights."""
    b = partition(ref_model, N)
    p_ref = bin_proportions(ref_model, b)
    p_syn = bin_proportions(syn_model, b)
    mean_o = per_bin_mean_outcome(ref_data, b)
    return BinPartition(b, p_ref, p_syn, mean_o, bin_weights(mean_o, bw))


__all__ = [
    "BinPartition",
    "BinWeightConfig",
    "bin_proportions",
    "bin_weights",
    "build_partition",
    "choose_bin_count",
    "empirical_proportions",
    "injury_risk",
    "partition",
    "per_bin_mean_outcome",
]
