"""Hot loops with a numba implementation and a pure-numpy fallback.

Both backends consume the same pre-generated random numbers, so a chain run
with either one follows the same trajectory up to floating-point rounding in
the log density. :mod:`binequiv._backend` decides which one the public
wrappers call.
"""

from __future__ import annotations

import math

import numpy as np

from .. import _backend
from . import _scalar, families

THETA_MAX = 6


# ---------------------------------------------------------------- numpy path

def _np_theta(code, u, ref):
    theta = np.empty(THETA_MAX)
    lj = _scalar.constrain(code, u, ref, theta)
    return theta, lj


def log_posterior_numpy(code, u, x, w, ref):
    """Weighted log likelihood + log prior + log Jacobian at unconstrained ``u``.

    ``x``/``w`` must already exclude zero-weight points.
    """
    theta, lj = _np_theta(code, u, ref)
    if lj == -math.inf or math.isnan(lj):
        return -math.inf
    lp = _scalar.log_prior(code, theta, ref)
    if lp == -math.inf:
        return -math.inf
    fam = _FAM_BY_CODE[code]
    lpdf = families.logpdf(fam, theta[: fam.n_params], x)
    if np.any(lpdf == -np.inf):
        return -math.inf
    ll = float(np.sum(w * lpdf))
    if math.isnan(ll):
        return -math.inf
    return ll + lp + lj


def _run_chain_numpy(code, u0, prop_chol, z, log_u, x, w, ref):
    T, d = z.shape
    steps = z @ prop_chol.T
    states = np.empty((T, d))
    logp = np.empty(T)
    cur = np.array(u0, dtype=float)
    cur_lp = log_posterior_numpy(code, cur, x, w, ref)
    acc = 0
    for t in range(T):
        prop = cur + steps[t]
        lp = log_posterior_numpy(code, prop, x, w, ref)
        if log_u[t] < lp - cur_lp:
            cur, cur_lp = prop, lp
            acc += 1
        states[t] = cur
        logp[t] = cur_lp
    return states, logp, acc


def _pointwise_numpy(code, params, x, w):
    fam = _FAM_BY_CODE[code]
    lp = families.logpdf(fam, params, x)
    with np.errstate(invalid="ignore"):
        out = lp * w
    out[:, w == 0] = 0.0
    return out


def _constrain_many_numpy(code, U, ref, d_theta):
    out = np.empty((U.shape[0], d_theta))
    theta = np.empty(THETA_MAX)
    for i in range(U.shape[0]):
        _scalar.constrain(code, U[i], ref, theta)
        out[i] = theta[:d_theta]
    return out


# ---------------------------------------------------------------- numba path

if _backend.HAVE_NUMBA:
    from numba import njit

    _jit = njit(cache=True, nogil=True)
    _constrain_nb = _jit(_scalar.constrain)
    _log_prior_nb = _jit(_scalar.log_prior)
    _logpdf_nb = _jit(_scalar.logpdf)

    @_jit
    def _log_post_nb(code, u, x, w, ref, theta):
        lj = _constrain_nb(code, u, ref, theta)
        if lj == -np.inf or np.isnan(lj):
            return -np.inf
        lp = _log_prior_nb(code, theta, ref)
        if lp == -np.inf:
            return -np.inf
        ll = 0.0
        for j in range(x.size):
            v = _logpdf_nb(code, theta, x[j])
            if v == -np.inf:
                return -np.inf
            ll += w[j] * v
        if np.isnan(ll):
            return -np.inf
        return ll + lp + lj

    @_jit
    def _run_chain_nb(code, u0, prop_chol, z, log_u, x, w, ref):
        T, d = z.shape
        states = np.empty((T, d))
        logp = np.empty(T)
        theta = np.empty(THETA_MAX)
        cur = u0.copy()
        prop = np.empty(d)
        cur_lp = _log_post_nb(code, cur, x, w, ref, theta)
        acc = 0
        for t in range(T):
            for i in range(d):
                s = 0.0
                for j in range(d):
                    s += prop_chol[i, j] * z[t, j]
                prop[i] = cur[i] + s
            lp = _log_post_nb(code, prop, x, w, ref, theta)
            if log_u[t] < lp - cur_lp:
                cur[:] = prop
                cur_lp = lp
                acc += 1
            states[t, :] = cur
            logp[t] = cur_lp
        return states, logp, acc

    @_jit
    def _pointwise_nb(code, params, x, w):
        S = params.shape[0]
        n = x.size
        out = np.empty((S, n))
        theta = np.empty(THETA_MAX)
        for s in range(S):
            for k in range(params.shape[1]):
                theta[k] = params[s, k]
            for j in range(n):
                if w[j] == 0.0:
                    out[s, j] = 0.0
                else:
                    out[s, j] = w[j] * _logpdf_nb(code, theta, x[j])
        return out

    @_jit
    def _constrain_many_nb(code, U, ref, d_theta):
        out = np.empty((U.shape[0], d_theta))
        theta = np.empty(THETA_MAX)
        for i in range(U.shape[0]):
            _constrain_nb(code, U[i], ref, theta)
            for k in range(d_theta):
                out[i, k] = theta[k]
        return out


_FAM_BY_CODE = {f.code: f for f in families.FAMILIES.values()}


def _prep(x, w):
    x = np.ascontiguousarray(x, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    keep = w != 0
    return x[keep], w[keep]


def run_chain(code, u0, prop_chol, z, log_u, x, w, ref, backend=None):
    """Random-walk Metropolis with a fixed proposal ``u + prop_chol @ z[t]``.

    Returns ``(states, log_posterior, n_accepted)``.
    """
    x, w = _prep(x, w)
    args = (
        int(code),
        np.ascontiguousarray(u0, dtype=float),
        np.ascontiguousarray(prop_chol, dtype=float),
        np.ascontiguousarray(z, dtype=float),
        np.ascontiguousarray(log_u, dtype=float),
        x,
        w,
        np.ascontiguousarray(ref, dtype=float),
    )
    if (backend or _backend.get_backend()) == "numba":
        return _run_chain_nb(*args)
    return _run_chain_numpy(*args)


def pointwise_loglik(code, params, x, w, backend=None):
    """Matrix of ``w_j * log f(x_j | params_s)``; zero-weight points give 0."""
    params = np.ascontiguousarray(np.atleast_2d(params), dtype=float)
    x = np.ascontiguousarray(x, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    if (backend or _backend.get_backend()) == "numba":
        return _pointwise_nb(int(code), params, x, w)
    return _pointwise_numpy(int(code), params, x, w)


def constrain_many(code, U, ref, d_theta, backend=None):
    U = np.ascontiguousarray(np.atleast_2d(U), dtype=float)
    ref = np.ascontiguousarray(ref, dtype=float)
    if (backend or _backend.get_backend()) == "numba":
        return _constrain_many_nb(int(code), U, ref, int(d_theta))
    return _constrain_many_numpy(int(code), U, ref, int(d_theta))


def log_posterior(code, u, x, w, ref):
    """Scalar log posterior (numpy path; used by the MAP search)."""
    x, w = _prep(x, w)
    return log_posterior_numpy(int(code), np.asarray(u, dtype=float), x, w, np.asarray(ref, dtype=float))
