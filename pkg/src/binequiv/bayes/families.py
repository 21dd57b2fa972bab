"""Candidate distribution families and their vectorized predictive functions.

All functions take a parameter matrix ``params`` of shape ``(S, d)`` (one row
per posterior draw) and an argument array broadcastable against ``(S, 1)``.
A 1-D parameter vector is treated as a single draw and the leading axis is
dropped from the result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from ._scalar import LOG_SQRT_2PI

EXPONENTIAL = "exponential"
NORMAL = "normal"
LOGNORMAL = "lognormal"
GAMMA = "gamma"
NORMAL_MIX = "normal_mixture2"
LOGNORMAL_MIX = "lognormal_mixture2"


@dataclass(frozen=True)
class DistributionFamily:
    kind: str
    code: int
    param_names: tuple[str, ...]
    positive: bool  # support is the positive half-line
    log_scale: bool  # parameters live on log(x)

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    @property
    def strict_positive(self) -> bool:
        return self.positive and self.kind != EXPONENTIAL


FAMILIES: dict[str, DistributionFamily] = {
    f.kind: f
    for f in (
        DistributionFamily(EXPONENTIAL, 0, ("scale",), True, False),
        DistributionFamily(NORMAL, 1, ("mu", "sigma"), False, False),
        DistributionFamily(LOGNORMAL, 2, ("mu", "sigma"), True, True),
        DistributionFamily(GAMMA, 3, ("shape", "scale"), True, False),
        DistributionFamily(NORMAL_MIX, 4, ("mu1", "sigma1", "mu2", "sigma2", "w1"), False, False),
        DistributionFamily(LOGNORMAL_MIX, 5, ("mu1", "sigma1", "mu2", "sigma2", "w1"), True, True),
    )
}


def get_family(kind: str | DistributionFamily) -> DistributionFamily:
    if isinstance(kind, DistributionFamily):
        return kind
    try:
        return FAMILIES[kind]
    except KeyError:
        raise ValueError(f"unknown family {kind!r}; choose from {', '.join(FAMILIES)}") from None


def check_params(family: DistributionFamily, params: np.ndarray) -> None:
    """Raise ValueError when any row violates the family's parameter support."""
    p = np.atleast_2d(np.asarray(params, dtype=float))
    if p.shape[-1] != family.n_params:
        raise ValueError(f"{family.kind} expects {family.n_params} parameters, got {p.shape[-1]}")
    if not np.all(np.isfinite(p)):
        raise ValueError("parameters must be finite")
    code = family.code
    if code == 0:
        ok = p[:, 0] > 0
    elif code in (1, 2):
        ok = p[:, 1] > 0
    elif code == 3:
        ok = (p[:, 0] > 0) & (p[:, 1] > 0)
    else:
        ok = (p[:, 1] > 0) & (p[:, 3] > 0) & (p[:, 4] > 0) & (p[:, 4] < 1)
    if not np.all(ok):
        raise ValueError(f"parameters outside the {family.kind} support")


def _cols(params):
    p = np.asarray(params, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    return [p[:, i : i + 1] for i in range(p.shape[1])], single


def _out(res, single):
    return res[0] if single else res


def logpdf(family, params, x):
    fam = get_family(family)
    c, single = _cols(params)
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if fam.code == 0:
            res = np.where(x >= 0, -np.log(c[0]) - x / c[0], -np.inf)
        elif fam.code == 1:
            z = (x - c[0]) / c[1]
            res = -LOG_SQRT_2PI - np.log(c[1]) - 0.5 * z * z
        elif fam.code == 2:
            y = np.log(np.where(x > 0, x, 1.0))
            z = (y - c[0]) / c[1]
            res = np.where(x > 0, -LOG_SQRT_2PI - np.log(c[1]) - 0.5 * z * z - y, -np.inf)
        elif fam.code == 3:
            xs = np.where(x > 0, x, 1.0)
            k, s = c
            res = (k - 1.0) * np.log(xs) - xs / s - special.gammaln(k) - k * np.log(s)
            res = np.where(x > 0, res, -np.inf)
        else:
            y, jac = x, 0.0
            if fam.code == 5:
                y = np.log(np.where(x > 0, x, 1.0))
                jac = y
            z1 = (y - c[0]) / c[1]
            z2 = (y - c[2]) / c[3]
            a = np.log(c[4]) - np.log(c[1]) - 0.5 * z1 * z1
            b = np.log1p(-c[4]) - np.log(c[3]) - 0.5 * z2 * z2
            res = np.logaddexp(a, b) - LOG_SQRT_2PI - jac
            if fam.code == 5:
                res = np.where(x > 0, res, -np.inf)
    return _out(res, single)


def _mix_root(target, lo, hi, fn, increasing, iters=200):
    """Vectorized bisection for ``fn(x) == target`` on ``[lo, hi]``."""
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        done = (mid == lo) | (mid == hi)
        if np.all(done):
            break
        below = fn(mid) < target if increasing else fn(mid) > target
        lo = np.where(below & ~done, mid, lo)
        hi = np.where(~below & ~done, mid, hi)
    return 0.5 * (lo + hi)


def _mix_parts(c):
    return (c[0], c[1]), (c[2], c[3]), c[4]


def cdf(family, params, x):
    fam = get_family(family)
    c, single = _cols(params)
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if fam.code == 0:
            res = np.where(x > 0, -np.expm1(-np.maximum(x, 0) / c[0]), 0.0)
        elif fam.code == 1:
            res = special.ndtr((x - c[0]) / c[1])
        elif fam.code == 2:
            y = np.log(np.where(x > 0, x, 1.0))
            res = np.where(x > 0, special.ndtr((y - c[0]) / c[1]), 0.0)
        elif fam.code == 3:
            res = np.where(x > 0, special.gammainc(c[0], np.maximum(x, 0) / c[1]), 0.0)
        else:
            (m1, s1), (m2, s2), w = _mix_parts(c)
            y = x
            if fam.code == 5:
                y = np.log(np.where(x > 0, x, 1.0))
            res = w * special.ndtr((y - m1) / s1) + (1 - w) * special.ndtr((y - m2) / s2)
            if fam.code == 5:
                res = np.where(x > 0, res, 0.0)
    return _out(res, single)


def sf(family, params, x):
    """Survival function 1 - cdf, computed without cancellation."""
    fam = get_family(family)
    c, single = _cols(params)
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if fam.code == 0:
            res = np.where(x > 0, np.exp(-np.maximum(x, 0) / c[0]), 1.0)
        elif fam.code == 1:
            res = special.ndtr((c[0] - x) / c[1])
        elif fam.code == 2:
            y = np.log(np.where(x > 0, x, 1.0))
            res = np.where(x > 0, special.ndtr((c[0] - y) / c[1]), 1.0)
        elif fam.code == 3:
            res = np.where(x > 0, special.gammaincc(c[0], np.maximum(x, 0) / c[1]), 1.0)
        else:
            (m1, s1), (m2, s2), w = _mix_parts(c)
            y = x
            if fam.code == 5:
                y = np.log(np.where(x > 0, x, 1.0))
            res = w * special.ndtr((m1 - y) / s1) + (1 - w) * special.ndtr((m2 - y) / s2)
            if fam.code == 5:
                res = np.where(x > 0, res, 1.0)
    return _out(res, single)


def ppf(family, params, q):
    """Quantile function (inverse cdf)."""
    fam = get_family(family)
    c, single = _cols(params)
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if fam.code == 0:
            res = -c[0] * np.log1p(-q)
        elif fam.code == 1:
            res = c[0] + c[1] * special.ndtri(q)
        elif fam.code == 2:
            res = np.exp(c[0] + c[1] * special.ndtri(q))
        elif fam.code == 3:
            res = c[1] * special.gammaincinv(c[0], q)
        else:
            (m1, s1), (m2, s2), w = _mix_parts(c)
            z = special.ndtri(q)
            a, b = m1 + s1 * z, m2 + s2 * z
            lo, hi = np.minimum(a, b), np.maximum(a, b)

            def f(y):
                return w * special.ndtr((y - m1) / s1) + (1 - w) * special.ndtr((y - m2) / s2)

            res = _mix_root(q, lo, hi, f, increasing=True)
            if fam.code == 5:
                res = np.exp(res)
    return _out(res, single)


def isf(family, params, q):
    """Inverse survival function: x with sf(x) == q."""
    fam = get_family(family)
    c, single = _cols(params)
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if fam.code == 0:
            res = -c[0] * np.log(q)
        elif fam.code == 1:
            res = c[0] - c[1] * special.ndtri(q)
        elif fam.code == 2:
            res = np.exp(c[0] - c[1] * special.ndtri(q))
        elif fam.code == 3:
            res = c[1] * special.gammainccinv(c[0], q)
        else:
            (m1, s1), (m2, s2), w = _mix_parts(c)
            z = special.ndtri(q)
            a, b = m1 - s1 * z, m2 - s2 * z
            lo, hi = np.minimum(a, b), np.maximum(a, b)

            def g(y):
                return w * special.ndtr((m1 - y) / s1) + (1 - w) * special.ndtr((m2 - y) / s2)

            res = _mix_root(q, lo, hi, g, increasing=False)
            if fam.code == 5:
                res = np.exp(res)
    return _out(res, single)


def signed_cdf(family, params, x, sign: int):
    """CDF on the original axis of data that was negated when ``sign == -1``."""
    if sign == 1:
        return cdf(family, params, x)
    return sf(family, params, -np.asarray(x, dtype=float))


def signed_ppf(family, params, q, sign: int):
    if sign == 1:
        return ppf(family, params, q)
    return -isf(family, params, q)


def signed_logpdf(family, params, x, sign: int):
    return logpdf(family, params, sign * np.asarray(x, dtype=float))
