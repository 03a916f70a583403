"""Thermohaline box-model presets.

``climate_full`` is the temperature/salinity model with a fast temperature
difference x and slow salinity difference y. ``climate_reduced`` is the
salinity equation alone, with the freshwater-flux parameter as a slowly
drifting variable; it is integrated in its native (fast) time.
"""

from __future__ import annotations

import numpy as np

from .errors import DomainError
from .fbm import as_hurst
from .manifold import hurst_factor
from .sim import SystemSpec

PRESETS = ("climate_full", "climate_reduced")


def climate_full_preset(sigma1, sigma2, eps, hurst, mu, eta_sq, hurst2=None):
    """Coupled model around the critical manifold x = 1 with a ~ -1."""
    if not eta_sq >= 0:
        raise DomainError("eta_sq must be >= 0")
    H = as_hurst(hurst)

    def f(x, y, e):
        return -(x - 1.0) - e * x * (1.0 + eta_sq * (x - y) ** 2)

    def g(x, y, e):
        return mu - y * (1.0 + eta_sq * (x - y) ** 2)

    def a_lin(y):
        return np.full_like(np.asarray(y, float), -1.0)

    def x_star(y):
        return np.ones_like(np.asarray(y, float))

    return SystemSpec(
        "coupled_2d", eps, sigma1, H, f=f, g=g, sigma2=sigma2, hurst2=hurst2,
        a_lin=a_lin, x_star=x_star, a_low=1.0, a_max=1.0 + 10 * eps * (1 + eta_sq),
        name="climate_full",
        params={"mu": mu, "eta_sq": eta_sq, "zeta": hurst_factor(H)},
    )


def climate_full_taylor_constant(eps, eta_sq, x_range, y_range):
    """M with |f(x* + xi) - f(x*) - a xi| <= M xi^2: half the sup of |f_xx| = eps eta^2 |6x - 4y|."""
    xs = np.asarray(x_range, float)
    ys = np.asarray(y_range, float)
    corners = 6 * xs[:, None] - 4 * ys[None, :]
    return 0.5 * eps * eta_sq * float(np.abs(corners).max())


def reduced_critical_y(x, eta_sq):
    """Critical manifold Y = X (1 + eta^2 (1 - X)^2)."""
    x = np.asarray(x, float)
    return x * (1.0 + eta_sq * (1.0 - x) ** 2)


def reduced_linearization(x, eta_sq):
    """d/dX of the fast drift; the branch is stable where this is negative."""
    x = np.asarray(x, float)
    return -(1.0 + eta_sq * (1.0 - x) * (1.0 - 3.0 * x))


def periodic_sigma2(t):
    return 0.05 * np.sin(10.0 * np.asarray(t, float)) + 0.15


def climate_reduced_preset(sigma2, eps, hurst, eta_sq, g_slow, x_range=(-0.5, 2.0)):
    """Salinity equation X' = Y - X(1 + eta^2 (1-X)^2) + noise, Y' = eps g(X, Y).

    ``sigma2`` is a constant or a callable of time. The fast scale is 1
    (native time) and ``eps`` multiplies the slow drift. The step guard uses
    the largest |d/dX drift| on ``x_range``.
    """
    if not eta_sq > 0:
        raise DomainError("eta_sq must be > 0")
    H = as_hurst(hurst)

    def f(x, y, e):
        return y - x * (1.0 + eta_sq * (1.0 - x) ** 2)

    def g(x, y, e):
        return e * g_slow(x, y)

    xs = np.linspace(*x_range, 1001)
    a_max = float(np.abs(reduced_linearization(xs, eta_sq)).max())
    sigma_fn = sigma2 if callable(sigma2) else None
    sigma = 0.0 if callable(sigma2) else float(sigma2)
    return SystemSpec(
        "nonlinear_1d", eps, sigma, H, f=f, g=g, sigma2=0.0, a_low=None, a_max=a_max,
        fast_scale=1.0, sigma_fn=sigma_fn, name="climate_reduced",
        params={"eta_sq": eta_sq},
    )


def linear_slow_drift(c0, c1, c2):
    """g(X, Y) = c0 + c1 X + c2 Y."""

    def g(x, y):
        return c0 + c1 * x + c2 * y

    return g
