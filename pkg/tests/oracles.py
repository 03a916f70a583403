"""Independent reference computations used by the tests.

Nothing here imports fracslow; every oracle is built from the defining
formulas with a different numerical method than the package uses.
"""

import math

import numpy as np
from scipy import linalg


def hurst_factor(h):
    """H Gamma(2H) through the standard-library gamma."""
    return h * math.gamma(2 * h)


def fbm_cov(t, s, h):
    return 0.5 * (t ** (2 * h) + s ** (2 * h) - abs(t - s) ** (2 * h))


def _rho(k, h):
    k = np.abs(np.asarray(k, dtype=float))
    return 0.5 * (np.abs(k + 1) ** (2 * h) + np.abs(k - 1) ** (2 * h) - 2 * k ** (2 * h))


def fou_cov_riemann(s, t, a, eps, sigma, h, n_cells=4096):
    """Cov(xi_s, xi_t) for constant a < 0, F = 1 by a product-midpoint sum.

    In fast time X = u / eps the covariance is
    sigma^2 H(2H-1) int_0^S int_0^T e^{a(S-X)} e^{a(T-Y)} |X-Y|^{2H-2}.
    Cells of width d carry the exact kernel moments d^{2H} rho_H(k - l),
    so the singular diagonal is integrated exactly and only the smooth
    weights are sampled at the midpoints.
    """
    S, T = sorted((s / eps, t / eps))
    d = T / n_cells
    mid = (np.arange(n_cells) + 0.5) * d
    wt = np.exp(a * (T - mid))
    ws = np.where(mid < S, np.exp(a * (S - mid)), 0.0)
    r = _rho(np.arange(n_cells), h) * d ** (2 * h)
    conv = linalg.matmul_toeplitz((r, r), wt)
    return sigma**2 * float(ws @ conv)


def ou_variance_brownian(t, a, eps, sigma):
    """Classical OU: Var = sigma^2 (1 - e^{2 a t / eps}) / (2 |a|)."""
    return sigma**2 * (1 - math.exp(2 * a * t / eps)) / (2 * abs(a))


def wilson(k, n, z):
    """Wilson score interval from its closed form."""
    p = k / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return centre - half, centre + half


def variant1(alpha_t, eps, h, sigma):
    """2e ceil((alpha/eps) h^2/sigma^2) exp(-h^2 / 2 sigma^2) in plain floats."""
    n = max(1, math.ceil(alpha_t / eps * h * h / (sigma * sigma)))
    return 2 * math.e * n * math.exp(-h * h / (2 * sigma * sigma))
