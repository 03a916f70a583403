"""Fractional Ornstein-Uhlenbeck process with slowly varying coefficients.

The process solves

    d xi = (1/eps) a(t) xi dt + (sigma / eps^H) F(t) dW^H,   xi_0 = 0,

and is Gaussian with an explicit covariance given by a weakly singular double
integral. All integrals are evaluated in the fast time X = u / eps, where the
eps-dependence of the kernel cancels and the integrand decays like
exp(-a_low * X) away from the evaluation time.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, interpolate

from . import quadrature
from .errors import AccuracyError, DomainError, NumericalError, StabilityError, StiffnessError
from .fbm import HurstIndex, as_hurst
from .rng import check_seed, stream

TRUNCATION = 45.0  # kernel window in units of 1/a_low (e^-45 ~ 3e-20)
MAX_EXACT_NODES = 2048


def _vectorize(fn):
    def wrapped(x):
        x = np.asarray(x, dtype=float)
        out = np.asarray(fn(x), dtype=float)
        if out.shape != x.shape:
            out = np.broadcast_to(out, x.shape).copy()
        return out

    return wrapped


@dataclass(frozen=True)
class LinearCoeffs:
    """Coefficients of the linearized fast equation.

    ``a`` and ``f_amp`` must accept numpy arrays. ``a_low`` is the declared
    stability margin, a(t) <= -a_low. ``a_high`` bounds |a(t)| and sets the
    quadrature panel width; it is estimated by sampling when omitted.
    """

    a: Callable
    f_amp: Callable
    eps: float
    sigma: float
    hurst: HurstIndex
    a_low: float
    a_high: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "hurst", as_hurst(self.hurst))
        object.__setattr__(self, "a", _vectorize(self.a))
        object.__setattr__(self, "f_amp", _vectorize(self.f_amp))
        for name in ("eps", "sigma", "a_low"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be > 0, got {getattr(self, name)}")

    @classmethod
    def constant(cls, a, f_amp, eps, sigma, hurst):
        if not a < 0:
            raise StabilityError(f"a must be < 0, got {a}")
        return cls(lambda t: np.full_like(t, a), lambda t: np.full_like(t, f_amp),
                   eps, sigma, hurst, a_low=-a, a_high=-a)

    def check_stable(self, t_end, n=513):
        ts = np.linspace(0.0, t_end, n)
        if np.any(self.a(ts) > -self.a_low * (1 - 1e-12)):
            raise StabilityError(f"a(t) exceeds -a_low = {-self.a_low} on [0, {t_end}]")
        if np.any(self.f_amp(ts) <= 0):
            raise DomainError(f"F(t) must be > 0 on [0, {t_end}]")

    def rate_bound(self, t_end):
        if self.a_high is not None:
            return float(self.a_high)
        return float(np.max(np.abs(self.a(np.linspace(0.0, t_end, 257)))))


class AlphaIntegral:
    """alpha(t, u) = int_u^t a(r) dr, from a closed form or a cached quadrature."""

    def __init__(self, fn):
        self._fn = fn

    def __call__(self, t, u):
        return self._fn(np.asarray(t, dtype=float), np.asarray(u, dtype=float))

    @classmethod
    def constant(cls, a):
        return cls(lambda t, u: a * (t - u))

    @classmethod
    def analytic(cls, fn):
        """``fn(t, u)`` must be vectorized."""
        return cls(fn)

    @classmethod
    def by_quadrature(cls, a_fn, t_max, n_panels=512, q=8):
        """Tabulate the primitive A(t) = int_0^t a and interpolate with A' = a."""
        a_fn = _vectorize(a_fn)
        edges = np.linspace(0.0, t_max, n_panels + 1)
        x, w = quadrature.gauss_legendre01(q)
        h = np.diff(edges)
        pts = edges[:-1, None] + h[:, None] * x[None, :]
        panel = (a_fn(pts) * w[None, :]).sum(axis=1) * h
        prim = np.concatenate([[0.0], np.cumsum(panel)])
        spline = interpolate.CubicHermiteSpline(edges, prim, a_fn(edges), extrapolate=True)
        out = cls(lambda t, u: spline(t) - spline(u))
        out.primitive = spline
        return out

    @classmethod
    def for_coeffs(cls, c, t_max):
        return cls.by_quadrature(c.a, t_max)


def _scaled_weight(c, al, right_times):
    """Weight of interval k in fast time: exp(alpha(t_k, eps X)/eps) F(eps X)."""
    right = np.asarray(right_times, dtype=float)
    eps = c.eps

    def weight(owner, X):
        u = eps * X
        return np.exp(al(right[owner], u) / eps) * c.f_amp(u)

    return weight


def _atom_width(c, t_end):
    return min(1.0, 0.5 / max(c.rate_bound(t_end), 1e-300))


def interval_gram(edges, c, al, q=12):
    """Renormalized covariance of the stochastic convolutions over each interval.

    Returns the matrix J[k, l] = Cov(J_k, J_l) / sigma^2 where
    J_k = (sigma / eps^H) int_{t_k}^{t_{k+1}} e^{alpha(t_{k+1}, u)/eps} F(u) dW^H_u.
    """
    edges = np.asarray(edges, dtype=float)
    if np.any(np.diff(edges) <= 0) or edges[0] < 0:
        raise DomainError("edges must be nonnegative and strictly increasing")
    n = edges.size - 1
    weight = _scaled_weight(c, al, edges[1:])
    atoms = quadrature.build_atoms(edges / c.eps, weight, _atom_width(c, edges[-1]),
                                   TRUNCATION / c.a_low)
    H = c.hurst
    if H.brownian_limit:
        return quadrature.owner_diag(atoms, n)
    beta = 2 * H.value - 2
    return H.value * (2 * H.value - 1) * quadrature.owner_gram(atoms, beta, n, q)


def _checked(fn, tol):
    coarse, fine = fn(12), fn(20)
    err = float(np.max(np.abs(fine - coarse)))
    scale = float(np.max(np.abs(fine)))
    if err > tol * max(scale, 1e-300):
        raise AccuracyError(
            f"quadrature error estimate {err:.3e} exceeds tolerance {tol:g}", fine, err
        )
    return fine


def fou_variance(t, c, al, tol=1e-8):
    """Var(xi_t) by singularity-splitting quadrature."""
    if t < 0:
        raise DomainError("t must be >= 0")
    if t == 0:
        return 0.0
    j = _checked(lambda q: interval_gram([0.0, t], c, al, q), tol)
    return float(c.sigma**2 * j[0, 0])


def fou_covariance(t1, t2, c, al, tol=1e-8):
    """Cov(xi_{t1}, xi_{t2})."""
    if t1 < 0 or t2 < 0:
        raise DomainError("times must be >= 0")
    lo, hi = sorted((float(t1), float(t2)))
    if lo == 0:
        return 0.0
    if lo == hi:
        return fou_variance(lo, c, al, tol)
    j = _checked(lambda q: interval_gram([0.0, lo, hi], c, al, q), tol)
    prop = np.exp(al(hi, lo) / c.eps)
    return float(c.sigma**2 * (prop * j[0, 0] + j[0, 1]))


def fou_covariance_matrix(times, c, al, q=12):
    """Covariance matrix of xi at increasing ``times`` (a leading 0 gives a zero row)."""
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0) or times[0] < 0:
        raise DomainError("times must be nonnegative and strictly increasing")
    lead_zero = times[0] == 0
    pos = times[1:] if lead_zero else times
    edges = np.concatenate([[0.0], pos])
    j = interval_gram(edges, c, al, q)
    n = pos.size
    # Propagator L[i, k] = exp(alpha(t_i, t_{k+1}) / eps) for k <= i.
    ii, kk = np.tril_indices(n)
    prop = np.zeros((n, n))
    prop[ii, kk] = np.exp(al(pos[ii], pos[kk]) / c.eps)
    cov = c.sigma**2 * prop @ j @ prop.T
    cov = 0.5 * (cov + cov.T)
    if lead_zero:
        full = np.zeros((n + 1, n + 1))
        full[1:, 1:] = cov
        return full
    return cov


def _cholesky_with_jitter(cov):
    n = cov.shape[0]
    scale = np.trace(cov) / n
    for jitter in (1e-12, 1e-10):
        try:
            return np.linalg.cholesky(cov + jitter * scale * np.eye(n))
        except np.linalg.LinAlgError:
            continue
    raise NumericalError("covariance matrix is not positive definite even with jitter 1e-10*trace/n")


def sample_fou_exact(grid, c, al, seed, replicas, start=0):
    """Exact Gaussian draws of xi on ``grid``; shape ``(replicas, n + 1)``.

    Replica r uses stream (seed, r), so any slice of replicas is reproducible
    on its own.
    """
    if grid.t0 != 0:
        raise DomainError("grid must start at t0 = 0")
    if grid.n + 1 > MAX_EXACT_NODES:
        raise DomainError(
            f"exact sampling limited to {MAX_EXACT_NODES} nodes; use the Euler scheme"
        )
    if replicas < 1:
        raise DomainError("replicas must be >= 1")
    seed = check_seed(seed)
    cov = fou_covariance_matrix(grid.times, c, al)[1:, 1:]
    chol = _cholesky_with_jitter(cov)
    z = np.stack([stream(seed, r).standard_normal(grid.n) for r in range(start, start + replicas)])
    out = np.zeros((replicas, grid.n + 1))
    out[:, 1:] = z @ chol.T
    return out


def _memory_integral(c, al, t, memory, width):
    """int_0^{v_max} exp(alpha(t, t - eps v)/eps) F(t - eps v) v^{2H-2} dv."""
    H = c.hurst.value
    beta = 2 * H - 2
    trunc = TRUNCATION / c.a_low
    vmax = trunc if memory == "stationary" else min(t / c.eps, trunc)
    if vmax <= 0:
        return 0.0
    a0, f0 = float(c.a(0.0)), float(c.f_amp(0.0))

    def g(v):
        u = t - c.eps * v
        up = np.maximum(u, 0.0)
        alpha = al(t, up) / c.eps
        f = c.f_amp(up)
        neg = u < 0
        if np.any(neg):
            alpha = np.where(neg, alpha + a0 * (up - u) / c.eps, alpha)
            f = np.where(neg, f0, f)
        return np.exp(alpha) * f

    first = min(width, vmax)
    xj, wj = quadrature.gauss_jacobi01(16, beta)
    total = first ** (beta + 1) * np.sum(wj * g(first * xj))
    if vmax > first:
        off = first + quadrature.graded_offsets(vmax - first, width)
        xg, wg = quadrature.gauss_legendre01(16)
        lo, hi = off[:-1, None], off[1:, None]
        v = lo + (hi - lo) * xg[None, :]
        total += np.sum((hi - lo) * wg[None, :] * g(v) * v**beta)
    return float(total)


@dataclass
class VarianceSolution:
    """Dense solution t -> w(t) of the renormalized variance equation."""

    t_end: float
    w0: float
    memory: str
    truncation_bound: float
    _sol: object = field(repr=False)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.t_end * (1 + 1e-12)):
            raise DomainError(f"t outside [0, {self.t_end}]")
        out = self._sol(t)[0] if t.ndim else float(self._sol(t)[0])
        return out


def variance_ode_solve(c, al, t_end, w0=0.0, memory="zero", rtol=1e-10):
    """Solve eps w' = 2 a w + 2 F H(2H-1) M(t) for the renormalized variance.

    ``memory='zero'`` integrates the memory term over the true history
    [0, t] (the case xi_0 = 0). ``memory='stationary'`` extends the
    coefficients constantly to negative times, so a process started in its
    stationary law is represented; with constant coefficients w0 = zeta(0)
    is then an exact equilibrium.
    """
    if memory not in ("zero", "stationary"):
        raise DomainError("memory must be 'zero' or 'stationary'")
    if w0 < 0:
        raise DomainError("w0 must be >= 0")
    if not t_end > 0:
        raise DomainError("t_end must be > 0")
    eps = c.eps
    H = c.hurst
    width = _atom_width(c, t_end)

    if H.brownian_limit:
        def rhs(t, w):
            return (2 * c.a(t) * w + c.f_amp(t) ** 2) / eps
    else:
        pref = 2 * H.value * (2 * H.value - 1)

        def rhs(t, w):
            m = _memory_integral(c, al, float(t), memory, width)
            return (2 * c.a(t) * w + pref * c.f_amp(t) * m) / eps

    def jac(t, w):
        return np.array([[2 * float(c.a(t)) / eps]])

    sol = integrate.solve_ivp(rhs, (0.0, t_end), [float(w0)], method="Radau", jac=jac,
                              rtol=rtol, atol=rtol * 1e-3, dense_output=True)
    if sol.status != 0:
        raise StiffnessError(
            f"variance ODE failed ({sol.message}); try a smaller eps-scaled step or larger rtol"
        )
    bound = float(np.exp(-TRUNCATION))
    return VarianceSolution(t_end, float(w0), memory, bound, sol.sol)


@dataclass(frozen=True)
class RelationReport:
    t: float
    variance: float
    rhs: float
    abs_diff: float
    rel_diff: float
    tol: float
    passed: bool

    def to_dict(self):
        return dict(self.__dict__)


def check_variance_relation(c, al, zeta, t, tol=1e-3, quad_tol=1e-8):
    """Compare Var(xi_t) with sigma^2 (zeta(t) - exp(2 alpha(t)/eps) zeta(0))."""
    var = fou_variance(t, c, al, quad_tol)
    rhs = c.sigma**2 * (zeta(t) - np.exp(2 * al(t, 0.0) / c.eps) * zeta(0.0))
    rhs = float(rhs)
    diff = abs(var - rhs)
    rel = diff / abs(rhs) if rhs != 0 else (0.0 if diff == 0 else np.inf)
    return RelationReport(float(t), var, rhs, diff, float(rel), tol, bool(rel <= tol))


def variance_curve(times, c, al, zeta=None, ode=None, tol=1e-8):
    """Rows (t, var_quadrature, var_ode, zeta, relation_rhs) for CSV/JSON export.

    ``var_ode`` is None when no ODE solution is supplied; ``zeta`` and
    ``relation_rhs`` are None without a manifold.
    """
    rows = []
    for t in np.asarray(times, dtype=float):
        var = fou_variance(float(t), c, al, tol)
        w = float(ode(t)) * c.sigma**2 if ode is not None else None
        z = rhs = None
        if zeta is not None:
            z = float(zeta(t))
            rhs = float(c.sigma**2 * (z - np.exp(2 * al(t, 0.0) / c.eps) * float(zeta(0.0))))
        rows.append((float(t), var, w, z, rhs))
    return rows


CURVE_COLUMNS = ("t", "var_quadrature", "var_ode", "zeta", "relation_rhs")


def curve_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for r in rows:
        w.writerow(["" if v is None else repr(float(v)) for v in r])
    return buf.getvalue()
