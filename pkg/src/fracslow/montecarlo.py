"""Monte Carlo exit probabilities and variance curves with confidence intervals.

Replica r draws its fast-noise component k from stream (master_seed, r, k)
and its slow noise from (master_seed, r, m). Replicas are processed in
fixed-size chunks, so results do not depend on the number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .bounds import BoundReport
from .errors import ConfigurationError, DomainError
from .fbm import TimeGrid, fbm_increments
from .rng import check_seed
from .sim import deterministic_solution, deviation, integrate_batch, normalized_deviation

STATUSES = ("dominates", "consistent", "violated", "vacuous")


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo run description.

    ``manifold`` is whatever ``normalized_deviation`` accepts: a zeta value,
    a ``ZetaManifold``, an X* matrix or an ``MdCriticalCovariance``.
    """

    spec: object
    grid: TimeGrid
    replicas: int
    master_seed: int
    h_levels: tuple
    manifold: object
    x0: object = 0.0
    y0: float = 0.0
    reference: object = "critical"
    bound_set: tuple = ()
    ci_level: float = 0.99
    method: str = "circulant"
    chunk: int = 1000
    threads: int = 1

    def __post_init__(self):
        if int(self.replicas) != self.replicas or self.replicas < 1:
            raise ConfigurationError("replicas must be a positive integer")
        check_seed(self.master_seed)
        h = tuple(float(v) for v in self.h_levels)
        if any(v <= 0 for v in h) or any(b <= a for a, b in zip(h, h[1:])):
            raise ConfigurationError("h_levels must be positive and strictly increasing")
        object.__setattr__(self, "h_levels", h)
        if not 0 < self.ci_level < 1:
            raise ConfigurationError("ci_level must lie in (0, 1)")
        if self.chunk < 1 or self.threads < 1:
            raise ConfigurationError("chunk and threads must be >= 1")
        if self.grid.t0 != 0:
            raise ConfigurationError("grid must start at t0 = 0")

    @property
    def t_end(self):
        return self.grid.t_end

    @property
    def ci_valid(self):
        return self.replicas >= 100

    def describe(self):
        return {
            "system": self.spec.describe(),
            "grid": self.grid.to_dict(),
            "replicas": self.replicas,
            "master_seed": self.master_seed,
            "h_levels": list(self.h_levels),
            "ci_level": self.ci_level,
            "method": self.method,
            "reference": self.reference if isinstance(self.reference, str) else "custom",
        }


@dataclass(frozen=True)
class McEstimate:
    h: float
    p_hat: float
    ci_low: float
    ci_high: float
    replicas: int
    exits: int
    ci_level: float = 0.99
    t: float | None = None
    sigma: float | None = None
    eps: float | None = None

    def __post_init__(self):
        if not 0 <= self.exits <= self.replicas:
            raise DomainError("need 0 <= exits <= replicas")
        if not 0 <= self.ci_low <= self.p_hat <= self.ci_high <= 1:
            raise DomainError("interval must satisfy 0 <= low <= p_hat <= high <= 1")

    def to_dict(self):
        return {"h": self.h, "p_hat": self.p_hat, "ci": [self.ci_low, self.ci_high],
                "exits": self.exits, "replicas": self.replicas}


def wilson_interval(exits, replicas, level=0.99):
    """Wilson score interval for a binomial proportion."""
    if not 0 <= exits <= replicas or replicas < 1:
        raise DomainError(f"need 0 <= exits <= replicas and replicas >= 1, got {exits}/{replicas}")
    ci = stats.binomtest(int(exits), int(replicas)).proportion_ci(level, method="wilson")
    p = exits / replicas
    return min(float(ci.low), p), max(float(ci.high), p)


def make_estimate(exits, replicas, h, level=0.99, t=None, sigma=None, eps=None):
    lo, hi = wilson_interval(exits, replicas, level)
    return McEstimate(float(h), exits / replicas, max(lo, 0.0), min(hi, 1.0), int(replicas),
                      int(exits), level, t, sigma, eps)


def _chunks(cfg):
    return [(s, min(cfg.chunk, cfg.replicas - s)) for s in range(0, cfg.replicas, cfg.chunk)]


def _simulate_chunk(cfg, start, count, det_ref):
    spec, grid = cfg.spec, cfg.grid
    seed = cfg.master_seed
    m = spec.m
    if spec.kind == "linear_md":
        dW = np.stack([fbm_increments(grid.n, grid.dt, spec.hurst, seed, count, k, cfg.method,
                                      start) for k in range(m)], axis=-1)
    else:
        dW = fbm_increments(grid.n, grid.dt, spec.hurst, seed, count, 0, cfg.method, start)
    dW2 = None
    if spec.g is not None and (spec.sigma2 > 0 or spec.sigma2_fn is not None):
        dW2 = fbm_increments(grid.n, grid.dt, spec.hurst2, seed, count, m, cfg.method, start)
    labels = [f"master_seed={seed}, replica={start + i}" for i in range(count)]
    xs, ys = integrate_batch(spec, dW, grid.dt, cfg.x0, cfg.y0, dW2, grid.t0, labels)
    if det_ref is not None:
        return xs - det_ref[None]
    return deviation(spec, xs, ys, grid, cfg.x0, cfg.y0, cfg.reference)


def _map_chunks(cfg, fn):
    """Apply ``fn(xi_chunk)`` to every chunk; results come back in chunk order."""
    det_ref = None
    if isinstance(cfg.reference, str) and cfg.reference == "deterministic":
        det_ref = deterministic_solution(cfg.spec, cfg.grid, cfg.x0, cfg.y0)[0]

    def work(chunk):
        return fn(_simulate_chunk(cfg, chunk[0], chunk[1], det_ref))

    chunks = _chunks(cfg)
    if cfg.threads == 1:
        return [work(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(work, chunks))


def sup_statistic(cfg):
    """Per-replica maximum over grid nodes of the normalized deviation."""
    times = cfg.grid.times

    def fn(xi):
        return normalized_deviation(xi, times, cfg.manifold).max(axis=1)

    return np.concatenate(_map_chunks(cfg, fn))


def estimate_exit_prob(cfg):
    """Map h -> McEstimate; all levels share the same trajectories."""
    sup = sup_statistic(cfg)
    spec = cfg.spec
    out = {}
    for h in cfg.h_levels:
        exits = int(np.count_nonzero(sup >= h))
        out[h] = make_estimate(exits, cfg.replicas, h, cfg.ci_level, cfg.t_end, spec.sigma,
                               spec.eps)
    return out


@dataclass(frozen=True)
class VarianceRow:
    t: float
    var_empirical: float
    std_error: float
    zeta: float
    relation_rhs: float
    var_theory: float
    flagged: bool


VARIANCE_COLUMNS = ("t", "var_empirical", "std_error", "zeta", "relation_rhs", "var_theory",
                    "flagged")


def estimate_variance_curve(cfg, times, zeta, alpha=None, theory=None, margin=0.05, n_se=4.0):
    """Empirical Var(xi_t) with standard errors at the grid nodes nearest ``times``.

    ``relation_rhs`` is sigma^2 (zeta(t) - exp(2 alpha(t)/eps) zeta(0)), with
    ``alpha(t, u)`` defaulting to a constant-coefficient integral for linear
    1-D systems. ``theory(t)`` (e.g. the exact fOU variance) is the comparison
    target when given; otherwise the relation right-hand side is used. Rows
    are flagged when |empirical - target| > n_se SE + margin * target.
    """
    spec, grid = cfg.spec, cfg.grid
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(times > grid.t_end * (1 + 1e-12)):
        raise DomainError("times must lie in [0, t_end]")
    idx = np.rint((times - grid.t0) / grid.dt).astype(int)

    def fn(xi):
        x = xi[:, idx] if xi.ndim == 2 else xi[:, idx, 0]
        return np.stack([np.sum(x**p, axis=0) for p in (1, 2, 3, 4)])

    sums = np.sum(np.stack(_map_chunks(cfg, fn)), axis=0)
    n = cfg.replicas
    m1, m2, m3, m4 = sums / n
    var = m2 - m1**2
    mu4 = m4 - 4 * m1 * m3 + 6 * m1**2 * m2 - 3 * m1**4
    se = np.sqrt(np.maximum(mu4 - var**2, 0.0) / n)
    var = var * n / (n - 1) if n > 1 else var
    if alpha is None:
        if spec.kind != "linear_1d":
            raise ConfigurationError("alpha is required for non-linear-1d systems")

        def alpha(t, u):
            return float(spec.a_lin(np.asarray(0.0))) * (t - u)
    rows = []
    for k, t in enumerate(grid.times[idx]):
        z = float(zeta(t))
        rhs = spec.sigma**2 * (z - math.exp(2 * alpha(t, 0.0) / spec.eps) * float(zeta(0.0)))
        target = float(theory(t)) if theory is not None else rhs
        flag = abs(var[k] - target) > n_se * se[k] + margin * abs(target)
        rows.append(VarianceRow(float(t), float(var[k]), float(se[k]), z, float(rhs),
                                float(theory(t)) if theory is not None else float("nan"),
                                bool(flag)))
    return rows


@dataclass(frozen=True)
class DominanceRow:
    h: float
    formula_id: str
    status: str
    value: float
    ci_low: float
    ci_high: float


@dataclass
class DominanceReport:
    rows: list = field(default_factory=list)
    estimates: list = field(default_factory=list)
    bounds: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def failed(self):
        return any(r.status == "violated" for r in self.rows)

    def to_dict(self):
        return {
            "config": self.config,
            "estimates": [e.to_dict() for e in self.estimates],
            "bounds": [{"h": h, "formula_id": b.formula_id, "value": b.value,
                        "vacuous": b.vacuous} for h, b in self.bounds],
            "dominance": [{"h": r.h, "formula_id": r.formula_id, "status": r.status}
                          for r in self.rows],
            "failed": self.failed,
        }

    def csv_rows(self):
        est = {e.h: e for e in self.estimates}
        for (h, b), r in zip(self.bounds, self.rows):
            e = est[h]
            yield (h, b.formula_id, e.p_hat, e.ci_low, e.ci_high, e.exits, e.replicas, b.value,
                   int(b.vacuous), r.status)


DOMINANCE_COLUMNS = ("h", "formula_id", "p_hat", "ci_low", "ci_high", "exits", "replicas",
                     "value", "vacuous", "status")


def classify(estimate, bound):
    if bound.vacuous:
        return "vacuous"
    if estimate.ci_low > bound.value:
        return "violated"
    if estimate.ci_high <= bound.value:
        return "dominates"
    return "consistent"


def _check_match(estimate, bound):
    inp = bound.inputs
    for key in ("h", "sigma", "eps", "t"):
        have = getattr(estimate, key)
        if key in inp and have is not None and not math.isclose(inp[key], have, rel_tol=1e-12):
            raise DomainError(
                f"{bound.formula_id}: {key} = {inp[key]} does not match estimate {have}"
            )


def dominance_report(estimates, bounds, config=None):
    """Compare estimates with bounds.

    ``estimates`` maps h -> McEstimate (or is a list of them) and ``bounds``
    maps h -> list of BoundReport.
    """
    if isinstance(estimates, dict):
        estimates = list(estimates.values())
    rows, pairs = [], []
    for est in estimates:
        for b in bounds.get(est.h, ()):
            if not isinstance(b, BoundReport):
                raise DomainError("bounds must be BoundReport instances")
            _check_match(est, b)
            rows.append(DominanceRow(est.h, b.formula_id, classify(est, b), b.value, est.ci_low,
                                     est.ci_high))
            pairs.append((est.h, b))
    return DominanceReport(rows, list(estimates), pairs, config or {})


def calibrate_k(estimates, bound_fn):
    """Smallest K making ``K * bound_fn(h)`` reach every Wilson upper limit.

    ``bound_fn(h)`` evaluates the bound with K = 1. This is an empirical
    calibration from a pilot run, not a theoretical constant.
    """
    if isinstance(estimates, dict):
        estimates = list(estimates.values())
    k = 0.0
    for est in estimates:
        base = bound_fn(est.h)
        if base <= 0:
            raise DomainError(f"bound with K = 1 is {base} at h = {est.h}")
        k = max(k, est.ci_high / base)
    return k
