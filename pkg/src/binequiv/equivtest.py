"""Binned practical-equivalence statistics, HDI-vs-ROPE decisions and diagnostics.

For each paired posterior draw (reference draw ``s`` with synthetic draw
``s``) the reference draw's quantiles define the bins, bin weights are
recomputed from the reference outcomes in those bins, and two statistics are
evaluated:

* ``theta``: the largest weighted absolute relative deviation
  ``max_i |dP_i / P_ref,i| * w_i`` (a worst-bin view);
* ``big_theta``: the weighted total absolute deviation
  ``sum_i |dP_i| * w_i`` (an aggregate view).

A metric is equivalent when the HDIs of both statistics sit inside their
ROPEs ``[0, thd]``. Both statistics are non-negative, so that reduces to
``hdi.hi <= thd``.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .bayes.hdi import Interval, hdi
from .bayes.sampler import FittedModel, PosteriorDraw
from .binning import BinPartition, BinWeightConfig, build_partition, choose_bin_count
from .dataset import MetricDataset

ALL_METRICS = "all_metrics"
CRITICAL_SUBSET = "critical_subset"


@dataclass(frozen=True)
class RopeConfig:
    alpha: float = 0.95
    tol_rel: float = 0.10
    tol_abs: float = 0.05
    m: int = 40
    N_max: int = 20
    overall_rule: str = ALL_METRICS
    critical: tuple[str, ...] = ()

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not self.tol_rel > 0 or not self.tol_abs > 0:
            raise ValueError("tolerances must be positive")
        if self.m < 1 or self.N_max < 1:
            raise ValueError("m and N_max must be at least 1")
        if self.overall_rule not in (ALL_METRICS, CRITICAL_SUBSET):
            raise ValueError(f"unknown overall rule {self.overall_rule!r}")
        object.__setattr__(self, "critical", tuple(self.critical))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["critical"] = list(self.critical)
        return d


@dataclass(frozen=True, eq=False)
class EquivalenceResult:
    metric_id: str
    theta_samples: np.ndarray
    big_theta_samples: np.ndarray
    theta_hdi: Interval
    big_theta_hdi: Interval
    theta_thd: float
    big_theta_thd: float
    theta_pass: bool
    big_theta_pass: bool
    N: int
    rel_contrib: np.ndarray  # (S, N): |dP_i / P_ref,i| * w_i
    abs_contrib: np.ndarray  # (S, N): |dP_i| * w_i
    ref_family: str = ""
    syn_family: str = ""
    partition: BinPartition | None = field(default=None, repr=False)

    @property
    def metric_equivalent(self) -> bool:
        return self.theta_pass and self.big_theta_pass

    @property
    def bin_contributions(self) -> dict:
        return {
            "theta": self.rel_contrib.mean(axis=0),
            "big_theta": self.abs_contrib.mean(axis=0),
        }

    def table_rows(self) -> list[dict]:
        """Rows in the layout metric / statistic / ROPE / 95% HDI / equivalence."""
        rows = []
        for name, iv, thd, ok in (
            ("theta", self.theta_hdi, self.theta_thd, self.theta_pass),
            ("Theta", self.big_theta_hdi, self.big_theta_thd, self.big_theta_pass),
        ):
            rows.append(
                {
                    "metric": self.metric_id,
                    "statistic": name,
                    "rope": [0.0, thd],
                    "hdi": iv.to_list(),
                    "hdi_mass": iv.mass,
                    "equivalent": "Yes" if ok else "No",
                }
            )
        return rows


@dataclass(frozen=True)
class OverallVerdict:
    equivalent: bool
    rule: str
    blocking_failures: tuple[str, ...]
    nonblocking_failures: tuple[str, ...]
    per_metric: dict

    def to_dict(self) -> dict:
        return {
            "equivalent": self.equivalent,
            "rule": self.rule,
            "blocking_failures": list(self.blocking_failures),
            "nonblocking_failures": list(self.nonblocking_failures),
            "per_metric": dict(self.per_metric),
        }


def _check(p_ref, p_syn, omega):
    p_ref = np.asarray(p_ref, dtype=float)
    p_syn = np.asarray(p_syn, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if p_ref.shape != p_syn.shape or p_ref.shape[-1:] != omega.shape[-1:]:
        raise ValueError("p_ref, p_syn and omega must have the same number of bins")
    return p_ref, p_syn, omega


def relative_contributions(p_ref, p_syn, omega) -> np.ndarray:
    p_ref, p_syn, omega = _check(p_ref, p_syn, omega)
    if np.any(p_ref <= 0):
        raise ValueError("reference bin proportion must be positive")
    return np.abs((p_syn - p_ref) / p_ref) * omega


def absolute_contributions(p_ref, p_syn, omega) -> np.ndarray:
    p_ref, p_syn, omega = _check(p_ref, p_syn, omega)
    return np.abs(p_syn - p_ref) * omega


def theta(p_ref, p_syn, omega):
    """Maximum over bins of the weighted absolute relative deviation."""
    out = relative_contributions(p_ref, p_syn, omega).max(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def big_theta(p_ref, p_syn, omega):
    """Sum over bins of the weighted absolute deviation."""
    out = absolute_contributions(p_ref, p_syn, omega).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def rope_thresholds(cfg: RopeConfig | None = None, bw: BinWeightConfig | None = None) -> tuple[float, float]:
    """Thresholds from the tolerances granted to a baseline bin of weight ``omega_b``."""
    cfg = cfg or RopeConfig()
    omega_b = (bw or BinWeightConfig()).omega_b
    return cfg.tol_rel * omega_b, cfg.tol_abs * omega_b


def relative_ceiling(theta_thd: float, omega: float) -> float:
    """Largest ``|dP / P_ref|`` a bin of weight ``omega`` may show under ``theta_thd``."""
    if not omega > 0:
        raise ValueError("omega must be positive")
    return theta_thd / omega


def _stack(model: FittedModel, S: int, order=None) -> PosteriorDraw:
    params = model.params[:S] if order is None else model.params[order]
    return PosteriorDraw(model.family, params, model.sign)


def _pair_orders(S_ref: int, S_syn: int, S: int, shuffle_seed):
    if shuffle_seed is None:
        return None, None
    rng_r, rng_s = (np.random.default_rng(np.random.SeedSequence([shuffle_seed, k])) for k in (0, 1))
    return rng_r.permutation(S_ref)[:S], rng_s.permutation(S_syn)[:S]


def run_metric_test(
    ref_model: FittedModel,
    syn_model: FittedModel,
    ref_data: MetricDataset,
    cfg: RopeConfig | None = None,
    bw: BinWeightConfig | None = None,
    *,
    keep_partition: bool = False,
    shuffle_seed: int | None = None,
) -> EquivalenceResult:
    """Per-metric test over all draw pairs.

    Draws are paired by index. With ``shuffle_seed`` each draw list is first
    permuted independently; that changes which draws meet but not the
    distribution of the statistics, since the two posteriors are independent.
    """
    cfg = cfg or RopeConfig()
    bw = bw or BinWeightConfig()
    for label, m in (("reference", ref_model), ("synthetic", syn_model)):
        if not m.converged:
            warnings.warn(f"{label} model for {ref_data.metric_id} is flagged non-converged", stacklevel=2)
    S = min(ref_model.S, syn_model.S)
    if ref_model.S != syn_model.S:
        warnings.warn(f"draw counts differ ({ref_model.S} vs {syn_model.S}); using the first {S}", stacklevel=2)
    N = choose_bin_count(ref_data.n, cfg.m, cfg.N_max)
    o_ref, o_syn = _pair_orders(ref_model.S, syn_model.S, S, shuffle_seed)
    part = build_partition(_stack(ref_model, S, o_ref), _stack(syn_model, S, o_syn), ref_data, N, bw)
    rel = relative_contributions(part.p_ref, part.p_syn, part.omega)
    ab = absolute_contributions(part.p_ref, part.p_syn, part.omega)
    th = rel.max(axis=1)
    bt = ab.sum(axis=1)
    th_thd, bt_thd = rope_thresholds(cfg, bw)
    th_hdi = hdi(th, cfg.alpha)
    bt_hdi = hdi(bt, cfg.alpha)
    return EquivalenceResult(
        metric_id=ref_data.metric_id,
        theta_samples=th,
        big_theta_samples=bt,
        theta_hdi=th_hdi,
        big_theta_hdi=bt_hdi,
        theta_thd=th_thd,
        big_theta_thd=bt_thd,
        theta_pass=bool(th_hdi.within(0.0, th_thd)),
        big_theta_pass=bool(bt_hdi.within(0.0, bt_thd)),
        N=N,
        rel_contrib=rel,
        abs_contrib=ab,
        ref_family=ref_model.family.kind,
        syn_family=syn_model.family.kind,
        partition=part if keep_partition else None,
    )


def overall_verdict(results, cfg: RopeConfig | None = None) -> OverallVerdict:
    """Combine per-metric verdicts under the configured rule.

    ``all_metrics`` requires every metric to pass. ``critical_subset``
    requires the listed metrics to pass and reports other failures without
    letting them block.
    """
    cfg = cfg or RopeConfig()
    results = list(results)
    if not results:
        raise ValueError("need at least one metric result")
    per = {r.metric_id: r.metric_equivalent for r in results}
    failures = [m for m, ok in per.items() if not ok]
    if cfg.overall_rule == ALL_METRICS:
        return OverallVerdict(not failures, ALL_METRICS, tuple(failures), (), per)
    if not cfg.critical:
        raise ValueError("critical_subset rule needs at least one critical metric")
    missing = [m for m in cfg.critical if m not in per]
    if missing:
        raise ValueError(f"critical metric(s) without a result: {', '.join(missing)}")
    blocking = tuple(m for m in failures if m in cfg.critical)
    other = tuple(m for m in failures if m not in cfg.critical)
    return OverallVerdict(not blocking, CRITICAL_SUBSET, blocking, other, per)


def diagnose(result: EquivalenceResult, mass: float = 0.95, sort_by: str = "theta") -> list[dict]:
    """Per-bin posterior summaries of each bin's contribution to both statistics.

    Rows are sorted by the posterior-mean contribution to ``sort_by``
    (``"theta"`` or ``"big_theta"``), largest first. HDIs need at least 100
    draws and are ``None`` otherwise.
    """
    if sort_by not in ("theta", "big_theta"):
        raise ValueError("sort_by must be 'theta' or 'big_theta'")
    rel, ab = np.atleast_2d(result.rel_contrib), np.atleast_2d(result.abs_contrib)
    S, N = rel.shape
    rows = []
    for i in range(N):
        row = {
            "bin": i + 1,
            "theta_contrib_mean": float(rel[:, i].mean()),
            "theta_contrib_hdi": hdi(rel[:, i], mass).to_list() if S >= 100 else None,
            "big_theta_contrib_mean": float(ab[:, i].mean()),
            "big_theta_contrib_hdi": hdi(ab[:, i], mass).to_list() if S >= 100 else None,
            "theta_argmax_share": float(np.mean(rel.argmax(axis=1) == i)),
        }
        rows.append(row)
    key = "theta_contrib_mean" if sort_by == "theta" else "big_theta_contrib_mean"
    rows.sort(key=lambda r: (-r[key], r["bin"]))
    return rows


def result_from_proportions(
    metric_id: str, p_ref, p_syn, omega, cfg: RopeConfig | None = None, bw: BinWeightConfig | None = None
) -> EquivalenceResult:
    """Build a result from explicit per-draw bin proportions and weights.

    Inputs are ``(S, N)`` arrays (or 1-D for a single draw). The HDI is only
    defined for 100 or more draws; with fewer, it degenerates to the sample
    range.
    """
    cfg = cfg or RopeConfig()
    p_ref, p_syn, omega = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (p_ref, p_syn, omega))
    rel = relative_contributions(p_ref, p_syn, omega)
    ab = absolute_contributions(p_ref, p_syn, omega)
    th, bt = rel.max(axis=1), ab.sum(axis=1)
    th_thd, bt_thd = rope_thresholds(cfg, bw)

    def interval(v):
        if v.size >= 100:
            return hdi(v, cfg.alpha)
        return Interval(float(v.min()), float(v.max()), cfg.alpha)

    th_hdi, bt_hdi = interval(th), interval(bt)
    return EquivalenceResult(
        metric_id=metric_id,
        theta_samples=th,
        big_theta_samples=bt,
        theta_hdi=th_hdi,
        big_theta_hdi=bt_hdi,
        theta_thd=th_thd,
        big_theta_thd=bt_thd,
        theta_pass=bool(th_hdi.hi <= th_thd),
        big_theta_pass=bool(bt_hdi.hi <= bt_thd),
        N=p_ref.shape[1],
        rel_contrib=rel,
        abs_contrib=ab,
    )


def verdict_from_hdi(iv: Interval, threshold: float) -> bool:
    """HDI-in-ROPE decision for a non-negative statistic."""
    return iv.within(0.0, threshold)


def metric_report(result: EquivalenceResult, with_diagnostics: bool = True) -> dict:
    out = {
        "metric": result.metric_id,
        "ref_family": result.ref_family,
        "syn_family": result.syn_family,
        "N": result.N,
        "draw_pairs": int(result.theta_samples.size),
        "rows": result.table_rows(),
        "theta_pass": result.theta_pass,
        "big_theta_pass": result.big_theta_pass,
        "metric_equivalent": result.metric_equivalent,
    }
    if with_diagnostics:
        out["bin_diagnostics"] = diagnose(result, result.theta_hdi.mass)
    return out


def build_report(results, verdict: OverallVerdict, cfg: RopeConfig, bw: BinWeightConfig, extra: dict | None = None) -> dict:
    """JSON-ready report: configuration echo, per-metric rows, overall verdict."""
    theta_thd, big_theta_thd = rope_thresholds(cfg, bw)
    config = {"rope": cfg.to_dict(), "bin_weight": asdict(bw), "theta_thd": theta_thd, "big_theta_thd": big_theta_thd}
    if extra:
        config.update(extra)
    return {
        "config": config,
        "metrics": [metric_report(r) for r in results],
        "overall": verdict.to_dict(),
    }


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_plot_data(
    directory,
    ref_model: FittedModel,
    syn_model: FittedModel,
    result: EquivalenceResult,
    levels=None,
    per_draw: bool = False,
) -> list[Path]:
    """CSV exports for external plotting.

    ``cdf_<metric>.csv`` evaluates both predictive CDFs (posterior mean and
    central 95% band) on a grid of reference quantiles; ``bins_<metric>.csv``
    holds per-bin contribution summaries; ``draws_<metric>.csv`` (optional)
    holds the per-draw statistics.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    levels = np.linspace(0.005, 0.995, 199) if levels is None else np.asarray(levels, dtype=float)
    x = np.median(ref_model.quantile(levels), axis=0)
    rows = []
    for j, q in enumerate(levels):
        fr = ref_model.cdf(x[j : j + 1])[:, 0]
        fs = syn_model.cdf(x[j : j + 1])[:, 0]
        rows.append(
            [q, x[j], fr.mean(), *np.quantile(fr, [0.025, 0.975]), fs.mean(), *np.quantile(fs, [0.025, 0.975])]
        )
    m = result.metric_id
    written = [directory / f"cdf_{m}.csv", directory / f"bins_{m}.csv"]
    _write_csv(
        written[0],
        ["level", "x", "ref_cdf", "ref_lo", "ref_hi", "syn_cdf", "syn_lo", "syn_hi"],
        rows,
    )
    diag = sorted(diagnose(result, result.theta_hdi.mass), key=lambda r: r["bin"])
    brows = []
    for r in diag:
        th = r["theta_contrib_hdi"] or [np.nan, np.nan]
        bt = r["big_theta_contrib_hdi"] or [np.nan, np.nan]
        brows.append([r["bin"], r["theta_contrib_mean"], *th, r["big_theta_contrib_mean"], *bt])
    _write_csv(
        written[1],
        ["bin", "theta_contrib", "theta_lo", "theta_hi", "big_theta_contrib", "big_theta_lo", "big_theta_hi"],
        brows,
    )
    if per_draw:
        written.append(directory / f"draws_{m}.csv")
        _write_csv(
            written[-1],
            ["draw", "theta", "big_theta"],
            ([i, a, b] for i, (a, b) in enumerate(zip(result.theta_samples, result.big_theta_samples))),
        )
    return written
