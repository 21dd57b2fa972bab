"""Weighted-likelihood posterior fitting by adaptive random-walk Metropolis.

Sampling happens on an unconstrained, data-standardized space (log for
positive parameters, logit for the mixture weight, an ordered gap for mixture
locations). A MAP search seeds the chains and the initial proposal
covariance; warmup then adapts a global step scale toward a target
acceptance rate and the proposal covariance toward the empirical covariance
of the warmup draws. Each chain draws every random number it needs up front
from ``SeedSequence([seed, chain])``, so runs are reproducible regardless of
thread scheduling or kernel backend.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import optimize

from ..dataset import MetricDataset
from . import families, kernels
from .diagnostics import effective_sample_size, split_rhat
from .families import DistributionFamily, get_family

RHAT_MAX = 1.05


class UnsupportedDataError(ValueError):
    """The data falls outside the family's support (after sign handling)."""


class DegenerateDataError(ValueError):
    """The data has no spread, so no scale parameter can be identified."""


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    warmup: int = 1000
    draws: int = 1000
    seed: int = 0
    adapt_window: int = 50
    threads: int = 1

    def __post_init__(self):
        if self.chains < 2:
            raise ValueError("need at least 2 chains for R-hat")
        if self.draws < 4 or self.warmup < 0:
            raise ValueError("invalid warmup/draws")


@dataclass(frozen=True)
class PosteriorDraw:
    """One posterior parameter vector, evaluated on the original data axis."""

    family: DistributionFamily
    params: np.ndarray
    sign: int = 1

    def cdf(self, x):
        return families.signed_cdf(self.family, self.params, x, self.sign)

    def quantile(self, q):
        return families.signed_ppf(self.family, self.params, q, self.sign)

    def logpdf(self, x):
        return families.signed_logpdf(self.family, self.params, x, self.sign)


@dataclass(frozen=True)
class LooResult:
    elpd: float
    se: float
    pointwise: np.ndarray
    pareto_k: np.ndarray
    reliable: bool

    @property
    def frac_bad_k(self) -> float:
        return float(np.mean(self.pareto_k > 0.7))


@dataclass(frozen=True, eq=False)
class FittedModel:
    family: DistributionFamily
    params: np.ndarray  # (chains * draws, n_params), chain-major
    sign: int
    rhat: dict
    ess: dict
    converged: bool
    seed: int
    chains: int
    draws_per_chain: int
    accept_rate: tuple
    ref: tuple
    metric_id: str = ""
    n_obs: int = 0
    loo: LooResult | None = None
    map_params: tuple = field(default=())

    @property
    def S(self) -> int:
        return int(self.params.shape[0])

    def draw(self, i: int) -> PosteriorDraw:
        return PosteriorDraw(self.family, self.params[i], self.sign)

    def cdf(self, x):
        """Predictive CDF per draw: ``x`` broadcasts against ``(S, 1)``."""
        return families.signed_cdf(self.family, self.params, x, self.sign)

    def quantile(self, q):
        return families.signed_ppf(self.family, self.params, q, self.sign)

    def logpdf(self, x):
        return families.signed_logpdf(self.family, self.params, x, self.sign)

    def chain_params(self) -> np.ndarray:
        return self.params.reshape(self.chains, self.draws_per_chain, -1)

    def summary(self) -> dict:
        out = {
            "family": self.family.kind,
            "converged": self.converged,
            "sign": self.sign,
            "posterior_mean": dict(zip(self.family.param_names, map(float, self.params.mean(axis=0)))),
            "rhat": self.rhat,
            "ess": self.ess,
        }
        if self.loo is not None:
            out["elpd_loo"] = self.loo.elpd
            out["elpd_se"] = self.loo.se
            out["loo_reliable"] = self.loo.reliable
            out["frac_pareto_k_gt_0.7"] = self.loo.frac_bad_k
        return out

    def to_dict(self) -> dict:
        d = {
            "family": self.family.kind,
            "param_names": list(self.family.param_names),
            "sign": self.sign,
            "seed": self.seed,
            "chains": self.chains,
            "draws_per_chain": self.draws_per_chain,
            "metric_id": self.metric_id,
            "n_obs": self.n_obs,
            "converged": self.converged,
            "rhat": _finite_or_none(self.rhat),
            "ess": _finite_or_none(self.ess),
            "accept_rate": list(self.accept_rate),
            "ref": list(self.ref),
            "map_params": list(self.map_params),
            "draws": self.params.tolist(),
        }
        if self.loo is not None:
            d["loo"] = {
                "elpd": self.loo.elpd,
                "se": self.loo.se,
                "reliable": self.loo.reliable,
                "pointwise": self.loo.pointwise.tolist(),
                "pareto_k": [_num(k) for k in self.loo.pareto_k.tolist()],
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> FittedModel:
        loo = None
        if d.get("loo") is not None:
            lo = d["loo"]
            loo = LooResult(
                elpd=lo["elpd"],
                se=lo["se"],
                pointwise=np.array(lo["pointwise"], dtype=float),
                pareto_k=np.array([np.inf if k is None else k for k in lo["pareto_k"]], dtype=float),
                reliable=lo["reliable"],
            )
        return cls(
            family=get_family(d["family"]),
            params=np.array(d["draws"], dtype=float),
            sign=int(d["sign"]),
            rhat={k: (math.inf if v is None else v) for k, v in d["rhat"].items()},
            ess={k: (math.nan if v is None else v) for k, v in d["ess"].items()},
            converged=bool(d["converged"]),
            seed=int(d["seed"]),
            chains=int(d["chains"]),
            draws_per_chain=int(d["draws_per_chain"]),
            accept_rate=tuple(d["accept_rate"]),
            ref=tuple(d["ref"]),
            metric_id=d.get("metric_id", ""),
            n_obs=int(d.get("n_obs", 0)),
            loo=loo,
            map_params=tuple(d.get("map_params", ())),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> FittedModel:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _num(v):
    return v if v is not None and math.isfinite(v) else None


def _finite_or_none(d: dict) -> dict:
    return {k: _num(v) for k, v in d.items()}


# ------------------------------------------------------------------ fitting


def data_sign(family: DistributionFamily, x: np.ndarray, w: np.ndarray | None = None) -> int:
    """+1 to fit as-is, -1 to fit a positive family to the negated values."""
    if not family.positive:
        return 1
    x = x if w is None else x[w > 0]
    if family.strict_positive:
        if np.all(x > 0):
            return 1
        if np.all(x < 0):
            return -1
    else:
        if np.all(x >= 0):
            return 1
        if np.all(x <= 0):
            return -1
    raise UnsupportedDataError(f"{family.kind} cannot represent data with values of both signs or zeros")


def weighted_log_likelihood(family, params, d: MetricDataset, sign: int = 1) -> float:
    """Sum of ``w_j * log f(x_j | params)``; -inf if a weighted point is out of support."""
    fam = get_family(family)
    params = np.asarray(params, dtype=float)
    families.check_params(fam, params)
    keep = d.weights > 0
    lp = families.logpdf(fam, params, sign * d.values[keep])
    if np.any(lp == -np.inf):
        return -math.inf
    return float(np.sum(d.weights[keep] * lp))


def _wmean_sd(y, w):
    mean = float(np.sum(w * y) / np.sum(w))
    var = float(np.sum(w * (y - mean) ** 2) / np.sum(w))
    return mean, math.sqrt(max(var, 0.0))


def _reference(fam: DistributionFamily, xf: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    keep = w > 0
    y = np.log(xf[keep]) if fam.log_scale else xf[keep]
    loc, spread = _wmean_sd(y, w[keep])
    if not spread > 0 or not math.isfinite(spread):
        raise DegenerateDataError(f"{fam.kind}: data has zero spread")
    if fam.positive and not fam.log_scale and not loc > 0:
        raise DegenerateDataError(f"{fam.kind}: data mean must be positive")
    return loc, spread


def _initial_u(fam: DistributionFamily, ref) -> np.ndarray:
    loc, spread = ref
    if fam.code == 0:
        return np.zeros(1)
    if fam.code in (1, 2):
        return np.zeros(2)
    if fam.code == 3:
        return np.array([math.log(max((loc / spread) ** 2, 1e-3)), 0.0])
    return np.array([-0.5, 0.0, math.log(0.5), math.log(0.5), 0.0])


def _hessian(f, u, h=1e-4):
    d = u.size
    H = np.empty((d, d))
    eye = np.eye(d) * h
    for i in range(d):
        for j in range(i, d):
            v = (
                f(u + eye[i] + eye[j])
                - f(u + eye[i] - eye[j])
                - f(u - eye[i] + eye[j])
                + f(u - eye[i] - eye[j])
            ) / (4 * h * h)
            H[i, j] = H[j, i] = v
    return H


def _map_and_cov(fam, x, w, ref):
    code = fam.code

    def neg(u):
        v = kernels.log_posterior(code, u, x, w, ref)
        return 1e300 if not math.isfinite(v) else -v

    u0 = _initial_u(fam, ref)
    res = optimize.minimize(neg, u0, method="BFGS", options={"gtol": 1e-6, "maxiter": 2000})
    u_map = res.x if np.isfinite(res.fun) and res.fun < neg(u0) else u0
    d = u_map.size
    n_eff = float(np.sum(w))
    default = np.eye(d) / max(n_eff, 1.0)
    try:
        H = _hessian(lambda u: -neg(u), u_map)
        if not np.all(np.isfinite(H)):
            raise np.linalg.LinAlgError
        lam, vec = np.linalg.eigh(-H)
        if lam.max() <= 0:
            raise np.linalg.LinAlgError
        lam = np.maximum(lam, 1e-6 * lam.max())
        cov = (vec / lam) @ vec.T
    except np.linalg.LinAlgError:
        cov = default
    return u_map, 0.5 * (cov + cov.T)


def _target_accept(d: int) -> float:
    return 0.234 + 0.2 / d


def _run_one_chain(fam, x, w, ref, u_map, cov, cfg: SamplerConfig, chain: int):
    code = fam.code
    d = u_map.size
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, chain]))
    chol = np.linalg.cholesky(cov)

    start = u_map
    for attempt in range(20):
        cand = u_map + (0.5**attempt) * (chol @ rng.standard_normal(d))
        if math.isfinite(kernels.log_posterior(code, cand, x, w, ref)):
            start = cand
            break

    total = cfg.warmup + cfg.draws
    z = rng.standard_normal((total, d))
    log_u = np.log(rng.random(total))

    base = 2.38 / math.sqrt(d)
    log_scale = 0.0
    target = _target_accept(d)
    cur = start
    collected = []
    late_scales = []
    t = 0
    adapt_from = cfg.warmup // 4
    while t < cfg.warmup:
        t1 = min(cfg.warmup, t + cfg.adapt_window)
        L = base * math.exp(log_scale) * chol
        states, _, acc = kernels.run_chain(code, cur, L, z[t:t1], log_u[t:t1], x, w, ref)
        cur = states[-1]
        rate = acc / (t1 - t)
        log_scale += 2.0 * (rate - target)
        if t >= cfg.warmup // 2:
            late_scales.append(log_scale)
        if t >= adapt_from:
            collected.append(states)
            pooled = np.concatenate(collected)
            if pooled.shape[0] >= 10 * d:
                emp = np.atleast_2d(np.cov(pooled.T)) + 1e-10 * np.eye(d)
                try:
                    chol = np.linalg.cholesky(emp)
                except np.linalg.LinAlgError:
                    pass
        t = t1

    # the last window's scale is noisy; average over the second half of warmup
    if late_scales:
        log_scale = float(np.mean(late_scales))
    L = base * math.exp(log_scale) * chol
    states, _, acc = kernels.run_chain(code, cur, L, z[cfg.warmup :], log_u[cfg.warmup :], x, w, ref)
    return states, acc / cfg.draws


def fit_posterior(family, d: MetricDataset, cfg: SamplerConfig | None = None) -> FittedModel:
    """Sample the weighted-likelihood posterior of ``family`` given ``d``.

    Raises :class:`UnsupportedDataError` or :class:`DegenerateDataError` when
    the family cannot be fitted. Non-convergence (any R-hat above 1.05) is
    reported through ``FittedModel.converged``, not raised.
    """
    cfg = cfg or SamplerConfig()
    fam = get_family(family)
    x_all, w_all = d.values, d.weights
    sign = data_sign(fam, x_all, w_all)
    keep = w_all > 0
    xf = sign * x_all[keep]
    w = w_all[keep]
    ref = np.array(_reference(fam, xf, w))
    u_map, cov = _map_and_cov(fam, xf, w, ref)

    def work(c):
        return _run_one_chain(fam, xf, w, ref, u_map, cov, cfg, c)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=min(cfg.threads, cfg.chains)) as pool:
            results = list(pool.map(work, range(cfg.chains)))
    else:
        results = [work(c) for c in range(cfg.chains)]

    U = np.concatenate([r[0] for r in results])
    params = kernels.constrain_many(fam.code, U, ref, fam.n_params)
    per_chain = params.reshape(cfg.chains, cfg.draws, fam.n_params)
    rhat = {n: split_rhat(per_chain[:, :, i]) for i, n in enumerate(fam.param_names)}
    ess = {n: effective_sample_size(per_chain[:, :, i]) for i, n in enumerate(fam.param_names)}
    converged = all(math.isfinite(r) and r <= RHAT_MAX for r in rhat.values())
    map_params = kernels.constrain_many(fam.code, u_map[None, :], ref, fam.n_params)[0]
    return FittedModel(
        family=fam,
        params=params,
        sign=sign,
        rhat=rhat,
        ess=ess,
        converged=converged,
        seed=cfg.seed,
        chains=cfg.chains,
        draws_per_chain=cfg.draws,
        accept_rate=tuple(float(r[1]) for r in results),
        ref=tuple(float(v) for v in ref),
        metric_id=d.metric_id,
        n_obs=d.n,
        map_params=tuple(float(v) for v in map_params),
    )


def with_loo(model: FittedModel, loo: LooResult) -> FittedModel:
    return replace(model, loo=loo)


def sampler_config_dict(cfg: SamplerConfig) -> dict:
    d = asdict(cfg)
    d.pop("threads")
    return d
