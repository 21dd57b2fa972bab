import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from binequiv.bayes import families as F
from binequiv.bayes import get_family
from binequiv.bayes.sampler import PosteriorDraw

PARAMS = {
    "exponential": [1.7],
    "normal": [-0.4, 2.3],
    "lognormal": [0.2, 0.6],
    "gamma": [2.5, 1.3],
    "normal_mixture2": [-2.0, 0.7, 1.5, 1.2, 0.35],
    "lognormal_mixture2": [-0.5, 0.3, 0.8, 0.4, 0.6],
}

SCIPY = {
    "exponential": lambda p: stats.expon(scale=p[0]),
    "normal": lambda p: stats.norm(p[0], p[1]),
    "lognormal": lambda p: stats.lognorm(s=p[1], scale=np.exp(p[0])),
    "gamma": lambda p: stats.gamma(p[0], scale=p[1]),
}


def test_unknown_family_lists_choices():
    with pytest.raises(ValueError, match="choose from"):
        get_family("weibull")


@pytest.mark.parametrize("kind", sorted(SCIPY))
def test_matches_scipy(kind):
    p = np.array(PARAMS[kind])
    ref = SCIPY[kind](p)
    x = ref.ppf(np.linspace(0.01, 0.99, 41))
    fam = get_family(kind)
    np.testing.assert_allclose(F.logpdf(fam, p, x), ref.logpdf(x), rtol=1e-10)
    np.testing.assert_allclose(F.cdf(fam, p, x), ref.cdf(x), rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(F.sf(fam, p, x), ref.sf(x), rtol=1e-10, atol=1e-14)
    q = np.linspace(0.001, 0.999, 37)
    np.testing.assert_allclose(F.ppf(fam, p, q), ref.ppf(q), rtol=1e-10)


@pytest.mark.parametrize("kind", ["normal_mixture2", "lognormal_mixture2"])
def test_mixture_density_integrates_to_cdf(kind):
    fam = get_family(kind)
    p = np.array(PARAMS[kind])
    lo, hi = F.ppf(fam, p, np.array([1e-9, 1 - 1e-9]))
    x = np.linspace(lo, hi, 200001)
    dens = np.exp(F.logpdf(fam, p, x))
    cum = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) / 2 * np.diff(x))])
    np.testing.assert_allclose(cum[::5000] + 1e-9, F.cdf(fam, p, x[::5000]), atol=1e-6)


@pytest.mark.parametrize("kind", sorted(PARAMS))
@pytest.mark.parametrize("sign", [1, -1])
def test_cdf_quantile_roundtrip(kind, sign):
    fam = get_family(kind)
    draw = PosteriorDraw(fam, np.array(PARAMS[kind]), sign)
    q = np.linspace(1e-6, 1 - 1e-6, 501)
    x = draw.quantile(q)
    assert np.all(np.diff(x) > 0)
    np.testing.assert_allclose(draw.cdf(x), q, atol=1e-8, rtol=0)


@pytest.mark.parametrize("kind", sorted(PARAMS))
def test_stacked_params_broadcast(kind):
    fam = get_family(kind)
    p = np.array(PARAMS[kind])
    stack = np.vstack([p, p, p])
    q = np.array([0.1, 0.5, 0.9])
    out = F.ppf(fam, stack, q)
    assert out.shape == (3, 3)
    np.testing.assert_allclose(out[1], F.ppf(fam, p, q), rtol=1e-12)


@pytest.mark.parametrize("kind", ["exponential", "lognormal", "gamma", "lognormal_mixture2"])
def test_negated_axis(kind):
    fam = get_family(kind)
    p = np.array(PARAMS[kind])
    x = np.array([0.3, 1.1, 2.4])
    np.testing.assert_allclose(F.signed_cdf(fam, p, -x, -1), F.sf(fam, p, x), rtol=1e-12)
    np.testing.assert_allclose(F.signed_logpdf(fam, p, -x, -1), F.logpdf(fam, p, x), rtol=1e-12)
    q = np.array([0.2, 0.7])
    np.testing.assert_allclose(F.signed_ppf(fam, p, q, -1), -F.isf(fam, p, q), rtol=1e-12)


def test_invalid_params_rejected():
    with pytest.raises(ValueError):
        F.check_params(get_family("normal"), np.array([0.0, -1.0]))
    with pytest.raises(ValueError):
        F.check_params(get_family("gamma"), np.array([1.0]))


@settings(max_examples=200, deadline=None)
@given(
    mu=st.floats(-5, 5),
    sigma=st.floats(0.05, 3),
    q=st.floats(1e-6, 1 - 1e-6),
)
def test_lognormal_roundtrip_property(mu, sigma, q):
    fam = get_family("lognormal")
    p = np.array([mu, sigma])
    x = F.ppf(fam, p, np.array([q]))
    assert abs(F.cdf(fam, p, x)[0] - q) <= 1e-8


@settings(max_examples=100, deadline=None)
@given(
    m1=st.floats(-3, 3),
    gap=st.floats(0.0, 6),
    s1=st.floats(0.1, 2),
    s2=st.floats(0.1, 2),
    w=st.floats(0.05, 0.95),
    q=st.floats(1e-5, 1 - 1e-5),
)
def test_mixture_roundtrip_property(m1, gap, s1, s2, w, q):
    fam = get_family("normal_mixture2")
    p = np.array([m1, s1, m1 + gap, s2, w])
    x = F.ppf(fam, p, np.array([q]))
    assert abs(F.cdf(fam, p, x)[0] - q) <= 1e-8
