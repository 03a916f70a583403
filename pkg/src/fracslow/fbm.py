"""Exact sampling of fractional Brownian motion and its covariance functions.

Two exact generators are provided: a Cholesky factorization of the
fractional Gaussian noise (fGn) covariance, used as the reference, and a
circulant embedding (Davies-Harte) that runs in O(n log n).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import linalg

from .errors import DomainError, EmbeddingError, SingularityError
from .rng import check_seed, stream

METHODS = ("cholesky", "circulant")
EMBEDDING_CLAMP = 1e-10


@dataclass(frozen=True)
class HurstIndex:
    """Hurst index in (1/2, 1).

    ``HurstIndex.brownian()`` builds the H = 1/2 value, which is only used
    for consistency checks against classical Brownian results.
    """

    value: float
    brownian_limit: bool = False

    def __post_init__(self):
        v = float(self.value)
        object.__setattr__(self, "value", v)
        if self.brownian_limit:
            if v != 0.5:
                raise DomainError("Brownian-limit mode requires H = 0.5")
        elif not 0.5 < v < 1.0:
            raise DomainError(
                f"Hurst index must lie in (1/2, 1), got {v}; "
                "use HurstIndex.brownian() for H = 1/2"
            )

    @classmethod
    def brownian(cls):
        return cls(0.5, brownian_limit=True)

    def __float__(self):
        return self.value


def as_hurst(h):
    """Coerce a float or ``HurstIndex`` to ``HurstIndex``."""
    if isinstance(h, HurstIndex):
        return h
    return HurstIndex(float(h))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t0, t0 + dt, ..., t0 + n*dt``."""

    t0: float
    dt: float
    n: int

    def __post_init__(self):
        if not self.t0 >= 0:
            raise DomainError(f"t0 must be >= 0, got {self.t0}")
        if not self.dt > 0:
            raise DomainError(f"dt must be > 0, got {self.dt}")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n + 1)

    @property
    def t_end(self):
        return self.t0 + self.n * self.dt

    def to_dict(self):
        return {"t0": self.t0, "dt": self.dt, "n": self.n}


@dataclass(frozen=True)
class FbmPath:
    grid: TimeGrid
    values: np.ndarray
    hurst: HurstIndex
    seed: int
    method: str = "circulant"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n + 1,):
            raise DomainError(f"expected {self.grid.n + 1} values, got shape {vals.shape}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def increments(self):
        return np.diff(self.values)

    def to_dict(self):
        return {
            "grid": self.grid.to_dict(),
            "hurst": self.hurst.value,
            "seed": self.seed,
            "method": self.method,
            "values": self.values.tolist(),
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "value"])
        for t, v in zip(self.grid.times, self.values):
            w.writerow([repr(float(t)), repr(float(v))])
        return buf.getvalue()


@dataclass(frozen=True)
class MultiFbmPath:
    components: tuple = field(default_factory=tuple)

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise DomainError("MultiFbmPath needs at least one component")
        g, h = comps[0].grid, comps[0].hurst
        if any(c.grid != g or c.hurst != h for c in comps):
            raise DomainError("all components must share grid and Hurst index")
        object.__setattr__(self, "components", comps)

    @property
    def m(self):
        return len(self.components)

    @property
    def grid(self):
        return self.components[0].grid

    @property
    def hurst(self):
        return self.components[0].hurst

    @property
    def values(self):
        """Array of shape ``(n + 1, m)``."""
        return np.column_stack([c.values for c in self.components])

    def to_dict(self):
        c0 = self.components[0]
        return {
            "grid": self.grid.to_dict(),
            "hurst": self.hurst.value,
            "seed": c0.seed,
            "method": c0.method,
            "values": [c.values.tolist() for c in self.components],
        }

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "value", "component"])
        times = self.grid.times
        for k, c in enumerate(self.components):
            for t, v in zip(times, c.values):
                w.writerow([repr(float(t)), repr(float(v)), k])
        return buf.getvalue()


def fbm_covariance(t, s, h):
    """E[W_t W_s] = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2."""
    H = as_hurst(h).value
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(s))):
        raise DomainError("times must be finite")
    if np.any(t < 0) or np.any(s < 0):
        raise DomainError("fBm covariance is defined for nonnegative times only")
    out = 0.5 * (t ** (2 * H) + s ** (2 * H) - np.abs(t - s) ** (2 * H))
    return float(out) if out.ndim == 0 else out


def kernel_phi(s, h):
    """The covariance kernel H(2H-1)|s|^{2H-2} of fBm Wiener integrals."""
    H = as_hurst(h).value
    s = np.asarray(s, dtype=float)
    if np.any(s == 0):
        raise SingularityError("kernel_phi is infinite at s = 0 (integrable singularity)")
    out = H * (2 * H - 1) * np.abs(s) ** (2 * H - 2)
    return float(out) if out.ndim == 0 else out


def fgn_autocovariance(k, h):
    """Unit-step fGn autocovariance rho_H(k) = (|k+1|^{2H} + |k-1|^{2H} - 2|k|^{2H}) / 2."""
    H = as_hurst(h).value
    k = np.abs(np.asarray(k, dtype=float))
    return 0.5 * (np.abs(k + 1) ** (2 * H) + np.abs(k - 1) ** (2 * H) - 2 * k ** (2 * H))


def fbm_covariance_matrix(times, h):
    times = np.asarray(times, dtype=float)
    return fbm_covariance(times[:, None], times[None, :], h)


@lru_cache(maxsize=32)
def _cholesky_factor(n, H, brownian):
    h = HurstIndex(H, brownian)
    cov = linalg.toeplitz(fgn_autocovariance(np.arange(n), h))
    L = np.linalg.cholesky(cov)
    L.flags.writeable = False
    return L


@lru_cache(maxsize=32)
def _circulant_sqrt_eigs(n, H, brownian):
    h = HurstIndex(H, brownian)
    r = fgn_autocovariance(np.arange(n + 1), h)
    row = np.concatenate([r, r[-2:0:-1]])
    lam = np.fft.fft(row).real
    top = lam.max()
    if lam.min() < -EMBEDDING_CLAMP * top:
        raise EmbeddingError(
            f"circulant embedding has eigenvalue {lam.min():.3e} < -{EMBEDDING_CLAMP:g} * max; "
            "fall back to method='cholesky'"
        )
    lam = np.clip(lam, 0.0, None)
    out = np.sqrt(lam / row.size)
    out.flags.writeable = False
    return out


def _draw_normals(gen, n, method):
    if method == "cholesky":
        return gen.standard_normal(n)
    return gen.standard_normal((2, 2 * n))


def _fgn_from_normals(z, n, h, method):
    """Map stacked standard normals to unit-step fGn samples (last axis length n)."""
    if method == "cholesky":
        L = _cholesky_factor(n, h.value, h.brownian_limit)
        return z @ L.T
    sq = _circulant_sqrt_eigs(n, h.value, h.brownian_limit)
    w = z[..., 0, :] + 1j * z[..., 1, :]
    return np.fft.fft(sq * w, axis=-1).real[..., :n]


def _check_method(method):
    if method not in METHODS:
        raise DomainError(f"unknown method {method!r}; choose one of {METHODS}")


def fgn_batch(n, h, generators, method="circulant"):
    """Unit-step fGn, one row per generator, shape ``(len(generators), n)``.

    Each row depends only on its own generator, so results are independent
    of batching.
    """
    h = as_hurst(h)
    _check_method(method)
    if n < 1:
        raise DomainError("n must be >= 1")
    z = np.stack([_draw_normals(g, n, method) for g in generators])
    return _fgn_from_normals(z, n, h, method)


def sample_fbm(grid, h, seed, method="circulant", component=0):
    """Sample one fBm path on ``grid`` (which must start at t0 = 0).

    The path uses stream (seed, component); with the default component it
    coincides with component 0 of ``sample_mfbm``.
    """
    h = as_hurst(h)
    seed = check_seed(seed)
    if grid.t0 != 0:
        raise DomainError("sample_fbm requires a grid starting at t0 = 0")
    return _path_from_stream(grid, h, seed, method, stream(seed, component))


def _path_from_stream(grid, h, seed, method, gen):
    fgn = fgn_batch(grid.n, h, [gen], method)[0]
    values = np.empty(grid.n + 1)
    values[0] = 0.0
    np.cumsum(fgn * grid.dt ** h.value, out=values[1:])
    return FbmPath(grid, values, h, seed, method)


def sample_mfbm(m, grid, h, seed, method="circulant"):
    """Sample ``m`` independent fBm components; component k uses stream (seed, k)."""
    if int(m) != m or m < 1:
        raise DomainError(f"m must be a positive integer, got {m}")
    h = as_hurst(h)
    seed = check_seed(seed)
    if grid.t0 != 0:
        raise DomainError("sample_mfbm requires a grid starting at t0 = 0")
    comps = [_path_from_stream(grid, h, seed, method, stream(seed, k)) for k in range(int(m))]
    return MultiFbmPath(tuple(comps))


def fbm_increments(n, dt, h, master_seed, replicas, component=0, method="circulant", start=0):
    """fBm increments for replicas ``start .. start+replicas-1``, shape (replicas, n).

    Replica r draws from stream ``(master_seed, r, component)``.
    """
    h = as_hurst(h)
    gens = [stream(master_seed, r, component) for r in range(start, start + replicas)]
    return fgn_batch(n, h, gens, method) * dt ** h.value
