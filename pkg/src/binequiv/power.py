"""Bootstrap power of the equivalence test, with Wilson score intervals."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import norm

from .bayes.hdi import Interval
from .bayes.loo import NoConvergedModelError, fit_and_select
from .bayes.sampler import FittedModel, SamplerConfig, sampler_config_dict
from .binning import BinWeightConfig
from .dataset import SYNTHETIC, MetricDataset
from .equivtest import RopeConfig, run_metric_test

STATISTICS = ("theta", "Theta")
DESK_REPS = 50
FULL_REPS = 1000
DESK_SAMPLER = SamplerConfig(chains=4, warmup=500, draws=500)


def wilson_interval(successes: int, n: int, level: float = 0.95) -> Interval:
    """Wilson score interval for a binomial proportion, clipped to [0, 1]."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0 <= successes <= n:
        raise ValueError("need 0 <= successes <= n")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    z = float(norm.ppf(0.5 + level / 2.0))
    p = successes / n
    z2n = z * z / n
    center = (p + z2n / 2.0) / (1.0 + z2n)
    half = z / (1.0 + z2n) * math.sqrt(p * (1.0 - p) / n + z2n / (4.0 * n))
    # the bounds are exactly 0 and 1 at the extremes; rounding would leave them a few ulp off
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == n else min(1.0, center + half)
    return Interval(lo, hi, level)


@dataclass(frozen=True)
class ReplicateRecord:
    index: int
    sampler_seed: int
    passes: dict  # metric -> {"theta": bool, "Theta": bool}
    nonconverged: tuple[str, ...]


@dataclass(frozen=True)
class PowerResult:
    reps: int
    successes: dict  # (metric, statistic) -> count
    nonconverged: dict  # metric -> count of replicates whose fits did not converge
    records: tuple[ReplicateRecord, ...]
    level: float = 0.95

    def power(self, metric: str, statistic: str) -> float:
        return self.successes[(metric, statistic)] / self.reps

    def wilson_ci(self, metric: str, statistic: str) -> Interval:
        return wilson_interval(self.successes[(metric, statistic)], self.reps, self.level)

    def rows(self) -> list[dict]:
        out = []
        for (metric, stat), k in self.successes.items():
            out.append(
                {
                    "metric": metric,
                    "statistic": stat,
                    "successes": k,
                    "reps": self.reps,
                    "power": k / self.reps,
                    "wilson_ci": self.wilson_ci(metric, stat).to_list(),
                }
            )
        return out

    def to_dict(self) -> dict:
        return {
            "reps": self.reps,
            "level": self.level,
            "table": self.rows(),
            "nonconverged": dict(self.nonconverged),
            "replicates": [
                {
                    "index": r.index,
                    "sampler_seed": r.sampler_seed,
                    "passes": r.passes,
                    "nonconverged": list(r.nonconverged),
                }
                for r in self.records
            ],
        }


def _as_list(ds) -> list[MetricDataset]:
    return [ds] if isinstance(ds, MetricDataset) else list(ds)


def _seed_int(*key: int) -> int:
    return int(np.random.SeedSequence(list(key)).generate_state(1, dtype=np.uint32)[0])


def resample_rows(parent: list[MetricDataset], size: int, rng: np.random.Generator) -> list[MetricDataset]:
    """Draw ``size`` rows with replacement, probability proportional to row weight.

    All metrics share the row draw; the replicate gets unit weights.
    """
    p = parent[0].weights / parent[0].weights.sum()
    idx = rng.choice(parent[0].n, size=size, replace=True, p=p)
    return [d.take(idx, unit_weights=True, role=SYNTHETIC) for d in parent]


def _run_replicate(i, parent, ref_by_metric, ref_models, size, families, rope, bw, sampler, seed, resample):
    rng = np.random.default_rng(np.random.SeedSequence([seed, i, 0]))
    rep = resample_rows(parent, size, rng) if resample else [d.take(np.arange(d.n), role=SYNTHETIC) for d in parent]
    s_seed = _seed_int(seed, i, 1)
    cfg = replace(sampler, seed=s_seed, threads=1)
    passes, bad = {}, []
    for d in rep:
        m = d.metric_id
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                syn_model, _ = fit_and_select(d, families, cfg)
                res = run_metric_test(ref_models[m], syn_model, ref_by_metric[m], rope, bw)
            passes[m] = {"theta": res.theta_pass, "Theta": res.big_theta_pass}
        except NoConvergedModelError:
            bad.append(m)
            passes[m] = {"theta": False, "Theta": False}
    return ReplicateRecord(i, s_seed, passes, tuple(bad))


def fit_reference_models(ref, families, sampler: SamplerConfig, seed: int) -> dict[str, FittedModel]:
    cfg = replace(sampler, seed=_seed_int(seed, 2**31 - 1))
    return {d.metric_id: fit_and_select(d, families, cfg)[0] for d in _as_list(ref)}


def bootstrap_power(
    parent,
    ref,
    replicate_size: int | None = None,
    reps: int = DESK_REPS,
    rope: RopeConfig | None = None,
    bw: BinWeightConfig | None = None,
    seed: int = 0,
    *,
    families=("normal", "lognormal", "gamma"),
    sampler: SamplerConfig = DESK_SAMPLER,
    ref_models: dict | None = None,
    threads: int = 1,
    resample: bool = True,
) -> PowerResult:
    """Share of bootstrap replicates of ``parent`` found equivalent to ``ref``.

    Each replicate resamples ``replicate_size`` parent rows (weights as
    resampling probabilities), re-runs model selection on every metric and
    tests it against the reference model. A replicate whose fits all fail to
    converge counts as a failure and is flagged. Replicate ``i`` draws its
    randomness from ``(seed, i)`` only, so the result does not depend on
    ``threads``. ``resample=False`` reuses the parent rows unchanged.
    """
    parent, ref = _as_list(parent), _as_list(ref)
    if reps < 1:
        raise ValueError("reps must be at least 1")
    n0 = parent[0].n
    if any(d.n != n0 for d in parent):
        raise ValueError("parent metrics must share the same rows")
    if any(not np.array_equal(d.weights, parent[0].weights) for d in parent):
        raise ValueError("parent metrics must share the same row weights")
    replicate_size = replicate_size or n0
    rope = rope or RopeConfig()
    bw = bw or BinWeightConfig()
    ref_by_metric = {d.metric_id: d for d in ref}
    missing = [d.metric_id for d in parent if d.metric_id not in ref_by_metric]
    if missing:
        raise ValueError(f"reference lacks metric(s): {', '.join(missing)}")
    if ref_models is None:
        ref_models = fit_reference_models(ref, families, sampler, seed)

    def work(i):
        return _run_replicate(i, parent, ref_by_metric, ref_models, replicate_size, families, rope, bw, sampler, seed, resample)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = tuple(pool.map(work, range(reps)))
    else:
        records = tuple(work(i) for i in range(reps))

    successes = {}
    for d in parent:
        for stat in STATISTICS:
            successes[(d.metric_id, stat)] = sum(r.passes[d.metric_id][stat] for r in records)
    nonconv = {d.metric_id: sum(d.metric_id in r.nonconverged for r in records) for d in parent}
    return PowerResult(reps, successes, nonconv, records)


def power_config_dict(reps, replicate_size, seed, families, sampler: SamplerConfig) -> dict:
    return {
        "reps": reps,
        "replicate_size": replicate_size,
        "seed": seed,
        "families": list(families),
        "sampler": sampler_config_dict(sampler),
    }


__all__ = [
    "DESK_REPS",
    "DESK_SAMPLER",
    "FULL_REPS",
    "PowerResult",
    "ReplicateRecord",
    "bootstrap_power",
    "fit_reference_models",
    "power_config_dict",
    "resample_rows",
    "wilson_interval",
]
