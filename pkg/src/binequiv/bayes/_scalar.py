"""Scalar per-family math shared by both kernel backends.

Every function here uses only ``math`` and indexing so that numba can compile
it unchanged; the numpy backend calls the same functions as plain Python.
Functions do not call each other (numba could not resolve a plain-Python
global), hence the repeated branches.

Family codes and constrained parameter layouts:

    0 exponential          [scale]
    1 normal               [mu, sigma]
    2 lognormal            [mu, sigma]          (log scale)
    3 gamma                [shape, scale]
    4 normal_mixture2      [mu1, sigma1, mu2, sigma2, w1]
    5 lognormal_mixture2   [mu1, sigma1, mu2, sigma2, w1] (log scale)

``ref`` holds the data location/spread used to standardize the unconstrained
coordinates and to set the weakly informative priors: ``(mean, sd)`` of the
data, or of its logarithm for the lognormal families.
"""

import math

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
PRIOR_SCALE = 10.0


def constrain(code, u, ref, theta):
    """Map unconstrained ``u`` into ``theta``; return log|Jacobian|.

    Returns -inf when the mapping overflows.
    """
    loc = ref[0]
    spread = ref[1]
    if code == 0:
        if u[0] > 700.0 or u[0] < -700.0:
            return -math.inf
        theta[0] = loc * math.exp(u[0])
        return math.log(theta[0])
    if code == 1 or code == 2:
        if u[1] > 700.0 or u[1] < -700.0:
            return -math.inf
        theta[0] = loc + spread * u[0]
        theta[1] = spread * math.exp(u[1])
        return math.log(spread) + math.log(theta[1])
    if code == 3:
        if abs(u[0]) > 700.0 or abs(u[1]) > 700.0:
            return -math.inf
        theta[0] = math.exp(u[0])
        theta[1] = loc * math.exp(u[1] - u[0])
        if theta[1] <= 0.0 or math.isinf(theta[1]):
            return -math.inf
        return math.log(theta[0]) + math.log(theta[1])
    # two-component mixtures, components ordered by location
    for k in range(1, 4):
        if u[k] > 700.0 or u[k] < -700.0:
            return -math.inf
    gap = spread * math.exp(u[1])
    theta[0] = loc + spread * u[0]
    theta[1] = spread * math.exp(u[2])
    theta[2] = theta[0] + gap
    theta[3] = spread * math.exp(u[3])
    if u[4] >= 0.0:
        log_w = -math.log1p(math.exp(-u[4]))
        log_1mw = -u[4] + log_w
    else:
        log_1mw = -math.log1p(math.exp(u[4]))
        log_w = u[4] + log_1mw
    theta[4] = math.exp(log_w)
    if gap <= 0.0 or theta[1] <= 0.0 or theta[3] <= 0.0 or theta[4] <= 0.0 or theta[4] >= 1.0:
        return -math.inf
    return math.log(spread) + math.log(gap) + math.log(theta[1]) + math.log(theta[3]) + log_w + log_1mw


def log_prior(code, theta, ref):
    """Unnormalized log prior on the constrained parameters.

    Locations ~ normal(mean, 10 sd); scales ~ half-normal(10 sd);
    gamma shape ~ half-normal(10); mixture weight ~ uniform(0, 1).
    """
    loc = ref[0]
    s = PRIOR_SCALE * ref[1]
    if code == 0:
        if theta[0] <= 0.0:
            return -math.inf
        z = theta[0] / s
        return -0.5 * z * z
    if code == 1 or code == 2:
        if theta[1] <= 0.0:
            return -math.inf
        z0 = (theta[0] - loc) / s
        z1 = theta[1] / s
        return -0.5 * (z0 * z0 + z1 * z1)
    if code == 3:
        if theta[0] <= 0.0 or theta[1] <= 0.0:
            return -math.inf
        z0 = theta[0] / PRIOR_SCALE
        z1 = theta[1] / s
        return -0.5 * (z0 * z0 + z1 * z1)
    if theta[1] <= 0.0 or theta[3] <= 0.0 or not 0.0 < theta[4] < 1.0:
        return -math.inf
    a = (theta[0] - loc) / s
    b = (theta[2] - loc) / s
    c = theta[1] / s
    d = theta[3] / s
    return -0.5 * (a * a + b * b + c * c + d * d)


def logpdf(code, theta, x):
    """Normalized log density of one observation; -inf outside the support."""
    if code == 0:
        if x < 0.0:
            return -math.inf
        return -math.log(theta[0]) - x / theta[0]
    if code == 1:
        z = (x - theta[0]) / theta[1]
        return -LOG_SQRT_2PI - math.log(theta[1]) - 0.5 * z * z
    if code == 2:
        if x <= 0.0:
            return -math.inf
        y = math.log(x)
        z = (y - theta[0]) / theta[1]
        return -LOG_SQRT_2PI - math.log(theta[1]) - 0.5 * z * z - y
    if code == 3:
        if x <= 0.0:
            return -math.inf
        k = theta[0]
        s = theta[1]
        return (k - 1.0) * math.log(x) - x / s - math.lgamma(k) - k * math.log(s)
    jac = 0.0
    y = x
    if code == 5:
        if x <= 0.0:
            return -math.inf
        y = math.log(x)
        jac = y
    z1 = (y - theta[0]) / theta[1]
    z2 = (y - theta[2]) / theta[3]
    a = math.log(theta[4]) - math.log(theta[1]) - 0.5 * z1 * z1
    b = math.log1p(-theta[4]) - math.log(theta[3]) - 0.5 * z2 * z2
    m = a if a > b else b
    return m + math.log(math.exp(a - m) + math.exp(b - m)) - LOG_SQRT_2PI - jac
