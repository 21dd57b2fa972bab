import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from binequiv.bayes import (
    NoConvergedModelError,
    SamplerConfig,
    attach_loo,
    fit_and_select,
    fit_posterior,
    loo_elpd,
    psis,
    select_model,
)
from binequiv.bayes.loo import gpd_fit, psis_matrix
from binequiv.bayes.sampler import LooResult

from conftest import FAST, make_ds


def test_gpd_fit_recovers_shape():
    rng = np.random.default_rng(0)
    for k_true in (0.2, 0.5, 0.9):
        x = np.sort(stats.genpareto(c=k_true, scale=1.0).rvs(4000, random_state=rng))
        k, sigma = gpd_fit(x)
        assert abs(k - k_true) < 0.1
        assert 0.8 < sigma < 1.2


def test_psis_uniform_ratios():
    lw, k = psis(np.zeros(1000))
    np.testing.assert_allclose(lw, -math.log(1000))
    assert k == 0.0


def test_psis_weights_normalized_and_tail_capped():
    rng = np.random.default_rng(1)
    r = rng.standard_t(2, 2000)
    lw, k = psis(r)
    assert math.isclose(np.exp(lw).sum(), 1.0, rel_tol=1e-12)
    raw = np.exp(r - r.max())
    raw /= raw.sum()
    assert np.exp(lw).max() <= raw.max() + 1e-15


def test_heavy_tail_flags_high_k():
    rng = np.random.default_rng(2)
    # log ratios whose exponentials follow a Pareto tail with shape 1/0.9
    log_r = np.log(rng.pareto(1 / 0.9, 4000) + 1.0)
    _, k = psis(log_r)
    assert k > 0.7


def test_matrix_matches_scalar():
    rng = np.random.default_rng(3)
    L = rng.normal(size=(1000, 40)) * rng.uniform(0.1, 3, 40)
    L[:, 5] = 0.0
    lw, ks = psis_matrix(L)
    for j in range(L.shape[1]):
        lw1, k1 = psis(L[:, j])
        np.testing.assert_allclose(lw[:, j], lw1, rtol=1e-12, atol=1e-12)
        assert ks[j] == pytest.approx(k1, abs=1e-12)


def test_loo_close_to_exact_for_normal():
    rng = np.random.default_rng(4)
    x = rng.normal(0.5, 1.3, 120)
    d = make_ds(x)
    m = fit_posterior("normal", d, SamplerConfig(seed=1))
    res = loo_elpd(m, d)
    # brute-force leave-one-out with plug-in predictive for a quick sanity band
    brute = sum(stats.norm(np.delete(x, i).mean(), np.delete(x, i).std(ddof=1)).logpdf(x[i]) for i in range(x.size))
    assert abs(res.elpd - brute) < 1.5
    assert res.reliable and res.pointwise.shape == (120,)
    assert res.se > 0


def test_loo_needs_1000_draws():
    d = make_ds(np.random.default_rng(5).normal(size=50))
    m = fit_posterior("normal", d, SamplerConfig(seed=0, warmup=200, draws=200))
    with pytest.raises(ValueError, match="at least 1000"):
        loo_elpd(m, d)


def test_weighted_loo_uses_weight_exponent():
    x = np.random.default_rng(6).normal(size=80)
    w = np.r_[np.full(40, 2.0), np.full(40, 0.5)]
    d = make_ds(x, w)
    m = fit_posterior("normal", d, FAST)
    res = loo_elpd(m, d)
    unweighted = loo_elpd(m, make_ds(x))
    assert res.elpd != pytest.approx(unweighted.elpd)


def test_selects_correct_family():
    rng = np.random.default_rng(7)
    d = make_ds(rng.lognormal(0.0, 0.8, 400))
    best, table = fit_and_select(d, ["normal", "lognormal", "gamma"], FAST)
    assert best.family.kind == "lognormal"
    assert sum(r["selected"] for r in table) == 1
    elpds = {r["family"]: r["elpd_loo"] for r in table}
    assert elpds["lognormal"] == max(elpds.values())


def test_unsupported_families_are_skipped():
    d = make_ds(np.random.default_rng(8).normal(size=300))
    best, table = fit_and_select(d, ["lognormal", "normal"], FAST)
    assert best.family.kind == "normal"
    assert "skipped" in table[0]


def _fake(model, elpd, converged=True):
    loo = LooResult(elpd, 1.0, np.zeros(2), np.zeros(2), True)
    return replace(model, loo=loo, converged=converged)


def test_selection_rules():
    d = make_ds(np.random.default_rng(9).gamma(2.0, size=200))
    cfg = SamplerConfig(seed=0, warmup=100, draws=250)
    g = fit_posterior("gamma", d, cfg)
    e = fit_posterior("exponential", d, cfg)
    # tie goes to the family with fewer parameters
    assert select_model([_fake(g, -10.0), _fake(e, -10.0)]).family.kind == "exponential"
    assert select_model([_fake(g, -9.0), _fake(e, -10.0)]).family.kind == "gamma"
    # non-converged candidates are never selected
    assert select_model([_fake(g, -1.0, False), _fake(e, -10.0)]).family.kind == "exponential"
    with pytest.raises(NoConvergedModelError):
        select_model([_fake(g, -1.0, False)])
    with pytest.raises(ValueError, match="no data"):
        select_model([g])


def test_attach_loo_is_pure():
    d = make_ds(np.random.default_rng(10).normal(size=100))
    m = fit_posterior("normal", d, FAST)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m2 = attach_loo(m, d)
    assert m.loo is None and m2.loo is not None
    assert m2.params is m.params
