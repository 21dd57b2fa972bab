"""Pareto-smoothed importance-sampling leave-one-out cross-validation."""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.special import logsumexp

from ..dataset import MetricDataset
from . import kernels
from .sampler import FittedModel, LooResult, with_loo

K_THRESHOLD = 0.7
MAX_BAD_FRACTION = 0.10
TAIL_FRACTION = 0.2
MIN_DRAWS = 1000


class NoConvergedModelError(RuntimeError):
    pass


def gpd_fit(x: np.ndarray) -> tuple[float, float]:
    """Zhang & Stephens (2009) estimate of the generalized Pareto (k, sigma).

    ``x`` holds sorted positive exceedances. The shape estimate is shrunk
    toward 0.5 with a weak prior worth 10 observations.
    """
    n = x.size
    m = 30 + int(math.sqrt(n))
    b = 1.0 - np.sqrt(m / (np.arange(1, m + 1) - 0.5))
    b = b / (3.0 * x[int(n / 4 + 0.5) - 1]) + 1.0 / x[-1]
    k = np.mean(np.log1p(-b[:, None] * x), axis=1)
    len_scale = n * (np.log(-(b / k)) - k - 1.0)
    with np.errstate(over="ignore"):
        weights = 1.0 / np.sum(np.exp(len_scale - len_scale[:, None]), axis=1)
    keep = weights >= 10 * np.finfo(float).eps
    weights = weights[keep] / weights[keep].sum()
    b_post = np.sum(b[keep] * weights)
    k_post = np.mean(np.log1p(-b_post * x))
    sigma = -k_post / b_post
    k_post = (n * k_post + 10 * 0.5) / (n + 10)
    return float(k_post), float(sigma)


def _gpd_quantile(p, k, sigma):
    if abs(k) < np.finfo(float).eps:
        return -sigma * np.log1p(-p)
    return sigma * np.expm1(-k * np.log1p(-p)) / k


def psis(log_ratios: np.ndarray) -> tuple[np.ndarray, float]:
    """Smooth one column of log importance ratios.

    The largest 20% of ratios are replaced by expected order statistics of a
    generalized Pareto fitted to them. Returns normalized log weights and the
    shape estimate ``k``.
    """
    lw = np.array(log_ratios, dtype=float)
    S = lw.size
    lw -= lw.max()
    if np.ptp(lw) == 0.0:
        return np.full(S, -math.log(S)), 0.0
    tail_len = int(TAIL_FRACTION * S)
    order = np.argsort(lw, kind="stable")
    cutoff = max(lw[order[S - tail_len - 1]], math.log(np.finfo(float).tiny))
    tail = order[S - tail_len :]
    tail = tail[lw[tail] > cutoff]
    k = math.inf
    if tail.size > 4:
        exp_cut = math.exp(cutoff)
        exceed = np.exp(lw[tail]) - exp_cut
        k, sigma = gpd_fit(exceed)
        if math.isfinite(k) and sigma > 0:
            p = (np.arange(tail.size) + 0.5) / tail.size
            lw[tail] = np.log(_gpd_quantile(p, k, sigma) + exp_cut)
            lw[lw > 0] = 0.0
    lw -= logsumexp(lw)
    return lw, k


def _gpd_fit_rows(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise :func:`gpd_fit` for a matrix of sorted exceedances."""
    n = X.shape[1]
    m = 30 + int(math.sqrt(n))
    base = 1.0 - np.sqrt(m / (np.arange(1, m + 1) - 0.5))
    b = base[None, :] / (3.0 * X[:, int(n / 4 + 0.5) - 1 : int(n / 4 + 0.5)]) + 1.0 / X[:, -1:]
    k = np.empty_like(b)
    for i in range(m):
        k[:, i] = np.mean(np.log1p(-b[:, i : i + 1] * X), axis=1)
    len_scale = n * (np.log(-(b / k)) - k - 1.0)
    with np.errstate(over="ignore"):
        weights = 1.0 / np.sum(np.exp(len_scale[:, None, :] - len_scale[:, :, None]), axis=2)
    weights = np.where(weights >= 10 * np.finfo(float).eps, weights, 0.0)
    weights /= weights.sum(axis=1, keepdims=True)
    b_post = np.sum(b * weights, axis=1)
    k_post = np.mean(np.log1p(-b_post[:, None] * X), axis=1)
    sigma = -k_post / b_post
    k_post = (n * k_post + 10 * 0.5) / (n + 10)
    return k_post, sigma


def psis_matrix(log_ratios: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """:func:`psis` applied to every column of an ``(S, n)`` matrix.

    Columns whose tail contains ties (or no spread) go through the scalar
    routine; the rest are smoothed together.
    """
    lw = np.array(log_ratios, dtype=float)
    S, n = lw.shape
    lw -= lw.max(axis=0)
    tail_len = int(TAIL_FRACTION * S)
    ks = np.empty(n)
    order = np.argsort(lw, axis=0, kind="stable")
    srt = np.take_along_axis(lw, order, axis=0)
    cutoff = np.maximum(srt[S - tail_len - 1], math.log(np.finfo(float).tiny))
    tail_vals = srt[S - tail_len :]
    clean = np.all(tail_vals > cutoff, axis=0) & (tail_len > 4)
    for j in np.flatnonzero(~clean):
        lw[:, j], ks[j] = psis(log_ratios[:, j])
    cols = np.flatnonzero(clean)
    p = (np.arange(tail_len) + 0.5) / tail_len
    for start in range(0, cols.size, 256):
        c = cols[start : start + 256]
        exp_cut = np.exp(cutoff[c])
        exceed = (np.exp(tail_vals[:, c]) - exp_cut).T
        k, sigma = _gpd_fit_rows(exceed)
        ks[c] = k
        ok = np.isfinite(k) & (sigma > 0)
        kk = np.where(np.abs(k) < np.finfo(float).eps, 1.0, k)[:, None]
        q = np.where(
            np.abs(k)[:, None] < np.finfo(float).eps,
            -sigma[:, None] * np.log1p(-p)[None, :],
            sigma[:, None] * np.expm1(-kk * np.log1p(-p)[None, :]) / kk,
        )
        smoothed = np.minimum(np.log(q + exp_cut[:, None]), 0.0)
        block = lw[:, c]
        idx = order[S - tail_len :, c]
        for r in np.flatnonzero(ok):
            block[idx[:, r], r] = smoothed[r]
        lw[:, c] = block
        lw[:, c] -= logsumexp(lw[:, c], axis=0)
    return lw, ks


def loo_elpd(m: FittedModel, d: MetricDataset) -> LooResult:
    """PSIS-LOO expected log pointwise predictive density.

    Each point's log likelihood carries its sample weight as an exponent,
    matching the weighted likelihood used to fit ``m``.
    """
    if m.S < MIN_DRAWS:
        raise ValueError(f"LOO needs at least {MIN_DRAWS} posterior draws, model has {m.S}")
    ll = kernels.pointwise_loglik(m.family.code, m.params, m.sign * d.values, d.weights)
    n = ll.shape[1]
    lw, ks = psis_matrix(-ll)
    pointwise = logsumexp(lw + ll, axis=0)
    elpd = float(pointwise.sum())
    se = float(math.sqrt(n * np.var(pointwise)))
    bad = float(np.mean(ks > K_THRESHOLD))
    reliable = bad <= MAX_BAD_FRACTION
    if not reliable:
        warnings.warn(
            f"{m.family.kind}: {bad:.1%} of Pareto k above {K_THRESHOLD}; elpd unreliable",
            stacklevel=2,
        )
    return LooResult(elpd=elpd, se=se, pointwise=pointwise, pareto_k=ks, reliable=reliable)


def attach_loo(m: FittedModel, d: MetricDataset) -> FittedModel:
    return with_loo(m, loo_elpd(m, d))


def select_model(candidates, d: MetricDataset | None = None) -> FittedModel:
    """Converged candidate with the highest elpd; ties go to fewer parameters."""
    pool = []
    for m in candidates:
        if not m.converged:
            continue
        if m.loo is None:
            if d is None:
                raise ValueError("candidate lacks LOO results and no data was given")
            m = attach_loo(m, d)
        pool.append(m)
    if not pool:
        raise NoConvergedModelError("no converged candidate model")
    best = pool[0]
    for m in pool[1:]:
        diff = m.loo.elpd - best.loo.elpd
        tol = 1e-9 * max(1.0, abs(best.loo.elpd))
        if diff > tol or (abs(diff) <= tol and m.family.n_params < best.family.n_params):
            best = m
    return best


def fit_and_select(
    d: MetricDataset,
    families,
    cfg=None,
    *,
    normalize: str = "sum_to_n",
) -> tuple[FittedModel, list[dict]]:
    """Fit every candidate family to ``d`` and pick one by PSIS-LOO.

    Families that cannot represent the data (support or zero spread) are
    skipped and listed in the returned table with the reason.
    """
    from ..dataset import normalize_weights
    from .sampler import DegenerateDataError, UnsupportedDataError, fit_posterior

    dn = normalize_weights(d, normalize)
    fitted, table = [], []
    for fam in families:
        try:
            m = fit_posterior(fam, dn, cfg)
        except (UnsupportedDataError, DegenerateDataError) as exc:
            table.append({"family": str(fam), "skipped": str(exc)})
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            m = attach_loo(m, dn)
        fitted.append(m)
        table.append(m.summary())
    best = select_model(fitted)
    for row in table:
        row["selected"] = row.get("family") == best.family.kind and "skipped" not in row
    return best, table
