"""Pathwise integration of fast-slow systems driven by additive fBm.

The fast variable obeys

    dx = (1/tau) f(x, y, eps) dt + (sigma / tau^H) F(y) dW^H

with tau = eps in the slow-time formulation (``fast_scale`` may override it),
and the slow variable either is the clock y = t or obeys
dy = g(x, y, eps) dt + sigma2(t) dW^{H2}.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from .errors import BlowUpError, ConfigurationError, DomainError, StabilityError
from .fbm import FbmPath, HurstIndex, MultiFbmPath, TimeGrid, as_hurst
from .manifold import MdCriticalCovariance, ZetaManifold, spectral_abscissa

KINDS = ("linear_1d", "nonlinear_1d", "coupled_2d", "linear_md")
CFL_FACTOR = 0.2


@dataclass(frozen=True)
class SystemSpec:
    """A fast-slow SDE model.

    Callables act elementwise on numpy arrays (one entry per replica).
    ``g=None`` means the slow variable is the clock y = t. For linear kinds
    the fast drift is derived from ``a_lin`` and ``x_star`` when ``f`` is
    omitted: f = a(y) (x - x*(y)) in 1-D and f = A (x - x*) in m-D.
    """

    kind: str
    eps: float
    sigma: float
    hurst: HurstIndex
    f: Callable | None = None
    g: Callable | None = None
    f_amp: Callable | None = None
    sigma2: float = 0.0
    sigma2_fn: Callable | None = None
    hurst2: HurstIndex | None = None
    a_lin: object = None
    x_star: object = None
    a_low: float | None = None
    a_max: float | None = None
    fast_scale: float | None = None
    sigma_fn: Callable | None = None
    exponential: bool | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.eps > 0:
            raise DomainError("eps must be > 0")
        if not self.sigma >= 0 or not self.sigma2 >= 0:
            raise DomainError("noise intensities must be >= 0")
        object.__setattr__(self, "hurst", as_hurst(self.hurst))
        object.__setattr__(self, "hurst2", as_hurst(self.hurst2) if self.hurst2 is not None
                           else self.hurst)
        if self.kind == "linear_md":
            A = np.atleast_2d(np.asarray(self.a_lin, dtype=float))
            if A.shape[0] != A.shape[1]:
                raise ConfigurationError("linear_md requires a square matrix a_lin")
            if spectral_abscissa(A) >= 0:
                raise StabilityError("linear_md requires A with negative spectral abscissa")
            A.flags.writeable = False
            object.__setattr__(self, "a_lin", A)
            xs = np.zeros(A.shape[0]) if self.x_star is None else np.asarray(self.x_star, float)
            object.__setattr__(self, "x_star", xs)
            eig = np.linalg.eigvals(A)
            if self.a_low is None:
                object.__setattr__(self, "a_low", float(-eig.real.max()))
            if self.a_max is None:
                object.__setattr__(self, "a_max", float(np.abs(eig).max()))
        elif self.kind == "linear_1d":
            if not callable(self.a_lin):
                raise ConfigurationError("linear_1d requires a callable a_lin")
        elif self.f is None:
            raise ConfigurationError(f"{self.kind} requires a fast drift f")
        if self.kind == "coupled_2d" and self.g is None:
            raise ConfigurationError("coupled_2d requires a slow drift g")
        if self.exponential is None:
            object.__setattr__(self, "exponential", self.kind in ("linear_1d", "linear_md"))
        if self.exponential and self.kind not in ("linear_1d", "linear_md"):
            raise ConfigurationError("exponential integration is only available for linear kinds")

    @property
    def m(self):
        return self.a_lin.shape[0] if self.kind == "linear_md" else 1

    @property
    def tau(self):
        return self.eps if self.fast_scale is None else self.fast_scale

    @property
    def rate_max(self):
        r = self.a_max if self.a_max is not None else self.a_low
        if r is None:
            raise ConfigurationError("declare a_max (or a_low) for the step-size guard")
        return float(r)

    def max_step(self, cfl_factor=CFL_FACTOR):
        return cfl_factor * self.tau / self.rate_max

    def reference(self, y):
        """Critical-manifold point x*(y)."""
        if self.x_star is None:
            return np.zeros_like(y)
        if callable(self.x_star):
            return self.x_star(y)
        return self.x_star

    def fast_drift(self, x, y):
        if self.f is not None:
            return self.f(x, y, self.eps)
        if self.kind == "linear_md":
            return (x - self.x_star) @ self.a_lin.T
        return self.a_lin(y) * (x - self.reference(y))

    def describe(self):
        return {"name": self.name, "kind": self.kind, "eps": self.eps, "sigma": self.sigma,
                "hurst": self.hurst.value, "sigma2": self.sigma2, **self.params}


def linear_1d(a, eps, sigma, hurst, f_amp=None, x_star=None, a_low=None, a_max=None, **kw):
    """Linear fast equation dx = (1/eps) a(t)(x - x*(t)) dt + (sigma/eps^H) F(t) dW^H.

    Scalars are promoted to constant functions.
    """
    a_fn = a if callable(a) else (lambda y, _a=float(a): np.full_like(np.asarray(y, float), _a))
    if not callable(a):
        if not a < 0:
            raise StabilityError("a must be < 0")
        a_low = -float(a) if a_low is None else a_low
        a_max = -float(a) if a_max is None else a_max
    return SystemSpec("linear_1d", eps, sigma, hurst, a_lin=a_fn, f_amp=f_amp, x_star=x_star,
                      a_low=a_low, a_max=a_max, **kw)


def linear_md(a_matrix, eps, sigma, hurst, x_star=None, **kw):
    return SystemSpec("linear_md", eps, sigma, hurst, a_lin=a_matrix, x_star=x_star, **kw)


@dataclass(frozen=True)
class Trajectory:
    grid: TimeGrid
    x: np.ndarray
    y: np.ndarray
    xi: np.ndarray
    seed: int | None = None

    def to_dict(self):
        return {"grid": self.grid.to_dict(), "seed": self.seed, "t": self.grid.times.tolist(),
                "x": self.x.tolist(), "y": self.y.tolist(), "xi": self.xi.tolist()}

    def to_json(self):
        return json.dumps(self.to_dict())

    def to_csv(self, manifold=None, h=None):
        """Columns t, x..., y, xi..., in_neighborhood (1/0, only with manifold and h)."""
        x = self.x.reshape(len(self.grid.times), -1)
        xi = self.xi.reshape(x.shape)
        m = x.shape[1]
        xn = ["x"] if m == 1 else [f"x{k}" for k in range(m)]
        xin = ["xi"] if m == 1 else [f"xi{k}" for k in range(m)]
        header = ["t", *xn, "y", *xin]
        flags = None
        if manifold is not None and h is not None:
            header.append("in_neighborhood")
            stat = normalized_deviation(self.xi[None], self.grid.times, manifold)[0]
            flags = (stat < h).astype(int)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for i, t in enumerate(self.grid.times):
            row = [repr(float(t)), *(repr(float(v)) for v in x[i]), repr(float(self.y[i])),
                   *(repr(float(v)) for v in xi[i])]
            if flags is not None:
                row.append(int(flags[i]))
            w.writerow(row)
        return buf.getvalue()


@dataclass(frozen=True)
class ExitRecord:
    exited: bool
    tau_index: int | None
    tau_time: float | None
    h: float

    def __post_init__(self):
        if self.exited != (self.tau_index is not None):
            raise DomainError("exited must agree with tau_index")


def _noise_coefficient(spec, y, t):
    """Fast-noise coefficient sigma F(y) / tau^H (or sigma_fn(t) / tau^H)."""
    scale = spec.tau**spec.hurst.value
    if spec.sigma_fn is not None:
        return np.asarray(spec.sigma_fn(t), float) / scale
    coef = spec.sigma / scale
    if spec.f_amp is not None:
        return coef * spec.f_amp(y)
    return coef


def check_step(spec, dt, cfl_factor=CFL_FACTOR):
    limit = spec.max_step(cfl_factor)
    if dt > limit * (1 + 1e-12):
        raise ConfigurationError(
            f"dt = {dt:g} exceeds the stiffness guard {cfl_factor} * tau / a_max = {limit:g}"
        )


def integrate_batch(spec, dW, dt, x0, y0=0.0, dW2=None, t0=0.0, seeds=None,
                    cfl_factor=CFL_FACTOR):
    """Integrate ``R`` replicas at once.

    ``dW`` holds fBm increments of shape (R, n) or (R, n, m); ``dW2`` the
    slow-noise increments (R, n). Returns (x, y) with a leading replica axis
    and n + 1 nodes.
    """
    check_step(spec, dt, cfl_factor)
    dW = np.asarray(dW, dtype=float)
    R, n = dW.shape[:2]
    md = spec.kind == "linear_md"
    if md and dW.shape[2:] != (spec.m,):
        raise DomainError(f"linear_md needs increments of shape (R, n, {spec.m})")
    if not md and dW.ndim != 2:
        raise DomainError("1-D systems need increments of shape (R, n)")
    slow_noise = spec.g is not None and (spec.sigma2 > 0 or spec.sigma2_fn is not None)
    if slow_noise and dW2 is None:
        raise DomainError("slow noise requested but no slow increments supplied")
    times = t0 + dt * np.arange(n + 1)
    xshape = (R, n + 1, spec.m) if md else (R, n + 1)
    xs = np.empty(xshape)
    ys = np.empty((R, n + 1))
    xs[:, 0] = x0
    ys[:, 0] = times[0] if spec.g is None else y0
    tau = spec.tau
    ratio = dt / tau
    if md and spec.exponential:
        A = spec.a_lin
        if np.count_nonzero(A - np.diag(np.diag(A))) == 0:
            d = np.diag(A)
            rho, rho_h = np.exp(d * ratio), np.exp(d * (ratio / 2))

            def lin(x, noise):
                return spec.x_star + rho * (x - spec.x_star) + rho_h * noise
        else:
            E, Eh = linalg.expm(A * ratio), linalg.expm(A * (ratio / 2))

            def lin(x, noise):
                return spec.x_star + (x - spec.x_star) @ E.T + noise @ Eh.T
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n):
            x, y, t = xs[:, i], ys[:, i], times[i]
            noise = _noise_coefficient(spec, y, t) * dW[:, i]
            if spec.exponential and not md:
                a = spec.a_lin(y)
                ref = spec.reference(y)
                xs[:, i + 1] = ref + np.exp(a * ratio) * (x - ref) + np.exp(a * (ratio / 2)) * noise
            elif spec.exponential:
                xs[:, i + 1] = lin(x, noise)
            else:
                xs[:, i + 1] = x + spec.fast_drift(x, y) * ratio + noise
            if spec.g is None:
                ys[:, i + 1] = times[i + 1]
            else:
                ynew = y + spec.g(x, y, spec.eps) * dt
                if slow_noise:
                    s2 = spec.sigma2_fn(t) if spec.sigma2_fn is not None else spec.sigma2
                    ynew = ynew + s2 * dW2[:, i]
                ys[:, i + 1] = ynew
    finite = np.isfinite(xs).reshape(R, n + 1, -1).all(axis=2) & np.isfinite(ys)
    if not finite.all():
        r = int(np.nonzero(~finite.all(axis=1))[0][0])
        idx = int(np.argmin(finite[r]))
        seed = None if seeds is None else seeds[r]
        raise BlowUpError(f"non-finite state in replica {r} at step {idx}", idx, seed)
    return xs, ys


def _increments(path):
    if isinstance(path, MultiFbmPath):
        return np.column_stack([c.increments for c in path.components])
    return path.increments


def integrate(spec, fbm, x0, y0=0.0, fbm2=None, reference="critical", cfl_factor=CFL_FACTOR):
    """Integrate one trajectory driven by the sampled path(s).

    ``reference`` selects xi = x - reference: ``'critical'`` uses x*(y),
    ``'deterministic'`` the noise-free solution from the same initial data,
    and a callable ``ref(t, y)`` any user-supplied slow manifold.
    """
    grid = fbm.grid
    dW = _increments(fbm)[None]
    dW2 = None if fbm2 is None else fbm2.increments[None]
    seed = fbm.components[0].seed if isinstance(fbm, MultiFbmPath) else fbm.seed
    xs, ys = integrate_batch(spec, dW, grid.dt, x0, y0, dW2, grid.t0, [seed], cfl_factor)
    xi = deviation(spec, xs, ys, grid, x0, y0, reference, cfl_factor)
    return Trajectory(grid, xs[0], ys[0], xi[0], seed)


def deterministic_solution(spec, grid, x0, y0=0.0, cfl_factor=CFL_FACTOR):
    shape = (1, grid.n, spec.m) if spec.kind == "linear_md" else (1, grid.n)
    zeros = np.zeros(shape)
    dW2 = np.zeros((1, grid.n)) if spec.g is not None else None
    xs, ys = integrate_batch(spec, zeros, grid.dt, x0, y0, dW2, grid.t0, None, cfl_factor)
    return xs[0], ys[0]


def deviation(spec, xs, ys, grid, x0, y0, reference="critical", cfl_factor=CFL_FACTOR):
    """xi = x - reference for a batch of trajectories."""
    if reference == "critical":
        ref = spec.reference(ys)
        if spec.kind == "linear_md":
            ref = np.broadcast_to(ref, xs.shape)
    elif reference == "deterministic":
        ref = deterministic_solution(spec, grid, x0, y0, cfl_factor)[0][None]
    elif callable(reference):
        ref = reference(grid.times, ys)
    else:
        raise ConfigurationError(f"unknown reference {reference!r}")
    return xs - ref


def normalized_deviation(xi, times, manifold):
    """Per node: |xi| / sqrt(zeta(t)) in 1-D, sqrt(<xi, X*^{-1} xi>) in m-D.

    B(h) membership is exactly ``normalized_deviation < h``.
    """
    xi = np.asarray(xi, dtype=float)
    if isinstance(manifold, MdCriticalCovariance):
        manifold = manifold.x_star
    if isinstance(manifold, ZetaManifold):
        z = np.broadcast_to(np.asarray(manifold(np.asarray(times)), float), xi.shape[:2])
        return np.abs(xi) / np.sqrt(z)
    arr = np.asarray(manifold, dtype=float)
    if arr.ndim == 0:
        return np.abs(xi) / np.sqrt(arr)
    if arr.ndim == 1 and xi.ndim == 2:
        # per-node zeta values
        return np.abs(xi) / np.sqrt(arr)[None, :]
    chol = np.linalg.cholesky(arr)
    y = linalg.solve_triangular(chol, xi.reshape(-1, arr.shape[0]).T, lower=True)
    return np.sqrt(np.sum(y * y, axis=0)).reshape(xi.shape[:-1])


def detect_exit(traj, manifold, h):
    """First grid node where the deviation leaves B(h).

    Detection happens at grid nodes only; excursions between nodes are not seen.
    """
    if not h > 0:
        raise DomainError("h must be > 0")
    stat = normalized_deviation(traj.xi[None], traj.grid.times, manifold)[0]
    out = np.nonzero(stat >= h)[0]
    if out.size == 0:
        return ExitRecord(False, None, None, float(h))
    i = int(out[0])
    return ExitRecord(True, i, float(traj.grid.times[i]), float(h))
