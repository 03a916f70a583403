"""Command-line front end: ``fracslow <command> --config PATH``.

Exit status is 0 on success, 2 for invalid configurations or arguments and
1 for runtime errors raised by the numerical modules.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import bounds as bnd
from . import io as out
from .config import COMMANDS, config_hash, format_errors, parse_config
from .errors import ConfigurationError, FracSlowError
from .fbm import HurstIndex, TimeGrid, sample_fbm, sample_mfbm
from .frac_ou import AlphaIntegral, LinearCoeffs, curve_to_csv, variance_curve, variance_ode_solve
from .manifold import (
    constant_zeta,
    hurst_factor,
    lyapunov_residual,
    lyapunov_solve,
    md_critical_covariance,
    zeta_critical,
)
from .montecarlo import DOMINANCE_COLUMNS, McConfig, dominance_report, estimate_exit_prob
from .presets import (
    climate_full_preset,
    climate_reduced_preset,
    linear_slow_drift,
    periodic_sigma2,
    reduced_critical_y,
    reduced_linearization,
)
from .rng import fresh_seed
from .sim import deterministic_solution, integrate, linear_1d, linear_md, normalized_deviation

THREADS_ENV = "FRACSLOW_THREADS"
STOCHASTIC = ("sample", "simulate", "mc", "climate")


def _hurst(p):
    return HurstIndex.brownian() if p.brownian_limit else HurstIndex(p.hurst)


def _grid(g):
    return TimeGrid(0.0, g.dt, g.n)


class System:
    """A validated system block turned into a SystemSpec plus its B(h) manifold."""

    def __init__(self, model):
        self.model = model
        self.kind = model.kind
        self.hurst = _hurst(model)
        if model.kind == "linear_1d":
            f_amp = model.f_amp

            def f_fn(y):
                return np.full_like(np.asarray(y, float), f_amp)

            x_star = model.x_star

            def xs_fn(y):
                return np.full_like(np.asarray(y, float), x_star)

            self.spec = linear_1d(model.a, model.eps, model.sigma, self.hurst, f_amp=f_fn,
                                  x_star=xs_fn)
            self.manifold = constant_zeta(model.a, model.f_amp, self.hurst)
        elif model.kind == "linear_md":
            self.spec = linear_md(np.asarray(model.a_matrix, float), model.eps, model.sigma,
                                  self.hurst)
            self.manifold = md_critical_covariance(self.spec.a_lin, self.hurst)
        elif model.kind == "climate_full":
            h2 = None if model.hurst2 is None else HurstIndex(model.hurst2)
            self.spec = climate_full_preset(model.sigma1, model.sigma2, model.eps, self.hurst,
                                            model.mu, model.eta_sq, h2)
            self.manifold = constant_zeta(-1.0, 1.0, self.hurst)
        else:
            s2 = periodic_sigma2 if model.sigma2 == "periodic" else model.sigma2
            g = linear_slow_drift(*model.g_slow)
            self.spec = climate_reduced_preset(s2, model.eps, self.hurst, model.eta_sq, g)
            self.manifold = None

    def reduced_manifold(self, grid, x0, y0):
        """Per-node zeta along the deterministic path of the reduced model."""
        xd, _ = deterministic_solution(self.spec, grid, x0, y0)
        a = reduced_linearization(xd, self.model.eta_sq)
        if np.any(a >= 0):
            i = int(np.argmax(a >= 0))
            raise ConfigurationError(
                f"deterministic path leaves the stable branch at t = {grid.times[i]:g}"
            )
        return hurst_factor(self.hurst) / np.abs(a) ** (2 * self.hurst.value)

    def b_manifold(self, grid, x0, y0, reference):
        if self.kind == "climate_reduced":
            if reference != "deterministic":
                raise ConfigurationError("climate_reduced requires reference = 'deterministic'")
            return self.reduced_manifold(grid, x0, y0)
        return self.manifold


def _fast_paths(sysobj, grid, seed, method):
    spec = sysobj.spec
    if spec.kind == "linear_md":
        fbm = sample_mfbm(spec.m, grid, spec.hurst, seed, method)
    else:
        fbm = sample_fbm(grid, spec.hurst, seed, method)
    fbm2 = None
    if spec.g is not None and (spec.sigma2 > 0 or spec.sigma2_fn is not None):
        fbm2 = sample_fbm(grid, spec.hurst2, seed, method, component=spec.m)
    return fbm, fbm2


def _matrix(x):
    x = np.asarray(x, float)
    return out.MatrixOut(shape=list(x.shape), data=x.ravel().tolist())


def _x0(p, sysobj):
    x0 = p.x0
    if sysobj.kind == "linear_md":
        x0 = np.broadcast_to(np.asarray(x0, float), (sysobj.spec.m,)).copy()
    elif isinstance(x0, list):
        raise ConfigurationError("x0 must be a scalar for 1-D systems")
    return x0


# --- commands ---------------------------------------------------------------


def cmd_sample(run, fmt, prov, threads):
    p = run.parameters
    grid = _grid(p.grid)
    H = _hurst(p)
    if p.m == 1:
        path = sample_fbm(grid, H, run.seed, p.method)
        values = path.values.tolist()
    else:
        path = sample_mfbm(p.m, grid, H, run.seed, p.method)
        values = path.values.tolist()
    if fmt == "csv":
        return path.to_csv()
    return out.render_json(out.SampleOut(**prov, grid=grid.to_dict(), hurst=H.value,
                                         method=p.method, values=values))


def cmd_fou(run, fmt, prov, threads):
    p = run.parameters
    H = _hurst(p)
    c = LinearCoeffs.constant(p.a, p.f_amp, p.eps, p.sigma, H)
    al = AlphaIntegral.constant(p.a)
    zeta = constant_zeta(p.a, p.f_amp, H)
    ode = variance_ode_solve(c, al, max(p.times)) if p.ode and max(p.times) > 0 else None
    rows = variance_curve(sorted(p.times), c, al, zeta, ode, p.tol)
    if fmt == "csv":
        return curve_to_csv(rows)
    keys = ("t", "var_quadrature", "var_ode", "zeta", "relation_rhs")
    return out.render_json(out.FouOut(**prov, rows=[dict(zip(keys, r)) for r in rows]))


def cmd_zeta(run, fmt, prov, threads):
    p = run.parameters
    H = _hurst(p)
    a, f = p.a, p.f_amp
    z = float(zeta_critical(0.0, lambda t: a + 0 * np.asarray(t, float),
                            lambda t: f + 0 * np.asarray(t, float), H))
    hf = hurst_factor(H)
    if fmt == "csv":
        return out.csv_text(("zeta", "hurst_factor"), [(z, hf)])
    return out.render_json(out.ZetaOut(**prov, zeta=z, hurst_factor=hf))


def cmd_lyapunov(run, fmt, prov, threads):
    p = run.parameters
    A = np.asarray(p.a_matrix, float)
    extra = {}
    if p.c_matrix is not None:
        C = np.asarray(p.c_matrix, float)
        X = lyapunov_solve(A, C)
        res = lyapunov_residual(A, X, C)
    else:
        md = md_critical_covariance(A, _hurst(p))
        X = md.x_star
        res = lyapunov_residual(A, X, md.q_matrix + md.q_matrix.T)
        extra = {"q_matrix": _matrix(md.q_matrix), "d_star": np.asarray(md.d_star).tolist(),
                 "symmetric": md.symmetric}
        if md.d_star_formula is not None:
            extra["d_star_formula"] = np.asarray(md.d_star_formula).tolist()
    if fmt == "csv":
        cols = [f"x{k}" for k in range(X.shape[1])]
        return out.csv_text(cols, X.tolist())
    return out.render_json(out.LyapunovOut(**prov, x=_matrix(X), residual=float(res), **extra))


def _bound_inputs(p, h):
    lw = tuple(p.lambda_weights) if p.lambda_weights is not None else None
    return bnd.BoundInputs(t=p.t, h=h, sigma=p.sigma, eps=p.eps, hurst=p.hurst,
                           alpha_t=p.alpha_t, a_plus=p.a_plus, m=p.m, f_plus=p.f_plus,
                           a_low=p.a_low, big_m=p.big_m, zeta_plus=p.zeta_plus,
                           zeta_minus=p.zeta_minus, k_const=p.k_const, lambda_weights=lw)


def _one_bound(p, h):
    if p.formula == "bernstein":
        if p.c is None or p.var_t is None:
            raise ConfigurationError("bernstein requires c and var_t")
        return bnd.bernstein_exit_bound(p.c, p.var_t)
    return bnd.evaluate(p.formula, _bound_inputs(p, h), p.d_star, p.prefactor)


def cmd_bounds(run, fmt, prov, threads):
    p = run.parameters
    hs = p.h if isinstance(p.h, list) else [p.h]
    reports = [_one_bound(p, h) for h in hs]
    if fmt == "csv":
        rows = [(h, p.sigma if p.sigma is not None else math.nan,
                 p.eps if p.eps is not None else math.nan,
                 p.t if p.t is not None else math.nan, r.value, r.vacuous)
                for h, r in zip(hs, reports)]
        return out.csv_text(("h", "sigma", "eps", "t", "value", "vacuous"), rows)
    if isinstance(p.h, list):
        return out.render_json(out.BoundSweepOut(**prov, sweep=[r.to_dict() for r in reports]))
    return out.render_json(out.BoundSingleOut(**prov, **reports[0].to_dict()))


def cmd_simulate(run, fmt, prov, threads):
    p = run.parameters
    sysobj = System(p.system)
    grid = _grid(p.grid)
    x0 = _x0(p, sysobj)
    manifold = sysobj.b_manifold(grid, x0, p.y0, p.reference)
    fbm, fbm2 = _fast_paths(sysobj, grid, run.seed, p.method)
    traj = integrate(sysobj.spec, fbm, x0, p.y0, fbm2, p.reference)
    if fmt == "csv":
        return traj.to_csv(manifold, p.h)
    d = traj.to_dict()
    d.pop("seed")
    flags = None
    if p.h is not None:
        stat = normalized_deviation(traj.xi[None], grid.times, manifold)[0]
        flags = (stat < p.h).tolist()
    return out.render_json(out.TrajectoryOut(**prov, **d, in_neighborhood=flags))


def _mc_bound_inputs(sysobj, p, T, h):
    """Bound inputs implied by the simulated system at level h."""
    spec = sysobj.spec
    common = dict(t=T, h=h, sigma=spec.sigma, eps=spec.eps, hurst=spec.hurst.value,
                  big_m=p.big_m, k_const=p.k_const)
    if sysobj.kind == "linear_1d":
        a = abs(sysobj.model.a)
        z = sysobj.manifold.zeta_plus
        return bnd.BoundInputs(alpha_t=a * T, a_plus=a, m=1, f_plus=sysobj.model.f_amp,
                               a_low=a, zeta_plus=z, zeta_minus=z,
                               **{**common, "big_m": 0.0 if p.big_m is None else p.big_m})
    if sysobj.kind == "linear_md":
        a_plus = float(np.abs(np.linalg.eigvals(spec.a_lin)).max())
        return bnd.BoundInputs(alpha_t=a_plus * T, a_plus=a_plus, m=spec.m, f_plus=1.0,
                               a_low=spec.a_low, **common)
    if sysobj.kind == "climate_full":
        z = hurst_factor(spec.hurst)
        return bnd.BoundInputs(alpha_t=T, a_plus=1.0, m=1, f_plus=1.0, a_low=1.0,
                               zeta_plus=z, zeta_minus=z, **common)
    raise ConfigurationError("bounds are not available for climate_reduced")


def cmd_mc(run, fmt, prov, threads):
    p = run.parameters
    sysobj = System(p.system)
    grid = _grid(p.grid)
    x0 = _x0(p, sysobj)
    manifold = sysobj.b_manifold(grid, x0, p.y0, p.reference)
    cfg = McConfig(sysobj.spec, grid, p.replicas, run.seed, tuple(p.h_levels), manifold, x0,
                   p.y0, p.reference, tuple(p.bounds), p.ci_level, p.method, p.chunk, threads)
    est = estimate_exit_prob(cfg)
    d_star = None
    if sysobj.kind == "linear_md":
        d_star = sysobj.manifold.d_star
    reports = {}
    for h in cfg.h_levels:
        inputs = _mc_bound_inputs(sysobj, p, grid.t_end, h) if p.bounds else None
        reports[h] = [bnd.evaluate(f, inputs, d_star, p.prefactor) for f in p.bounds]
    describe = {**cfg.describe(), "bounds": list(p.bounds), "prefactor": p.prefactor,
                "chunk": p.chunk}
    report = dominance_report(est, reports, describe)
    if fmt == "csv":
        if p.bounds:
            return out.csv_text(DOMINANCE_COLUMNS, report.csv_rows())
        rows = [(e.h, e.p_hat, e.ci_low, e.ci_high, e.exits, e.replicas) for e in est.values()]
        return out.csv_text(("h", "p_hat", "ci_low", "ci_high", "exits", "replicas"), rows)
    return out.render_json(out.McOut(**prov, **report.to_dict()))


CLIMATE_PARTS = ("trajectory", "deterministic", "critical_manifold", "band")


def _climate_series(run):
    p = run.parameters
    sysobj = System(p.system)
    grid = _grid(p.grid)
    spec = sysobj.spec
    fbm, fbm2 = _fast_paths(sysobj, grid, run.seed, p.method)
    ref = "critical" if sysobj.kind == "climate_full" else "deterministic"
    traj = integrate(spec, fbm, p.x0, p.y0, fbm2, ref)
    xd, yd = deterministic_solution(spec, grid, p.x0, p.y0)
    t = grid.times
    series = {
        "trajectory": (("t", "x", "y"), np.column_stack([t, traj.x, traj.y])),
        "deterministic": (("t", "x", "y"), np.column_stack([t, xd, yd])),
    }
    if sysobj.kind == "climate_full":
        ys = np.linspace(min(traj.y.min(), yd.min()), max(traj.y.max(), yd.max()), 101)
        series["critical_manifold"] = (("x", "y", "stable"),
                                       np.column_stack([np.ones_like(ys), ys, np.ones_like(ys)]))
        half = p.h * math.sqrt(hurst_factor(spec.hurst))
        series["band"] = (("t", "lower", "upper"),
                          np.column_stack([t, np.full_like(t, 1.0 - half), np.full_like(t, 1.0 + half)]))
    else:
        eta = sysobj.model.eta_sq
        xs = np.linspace(-0.5, 2.0, 251)
        stable = (reduced_linearization(xs, eta) < 0).astype(float)
        series["critical_manifold"] = (("x", "y", "stable"),
                                       np.column_stack([xs, reduced_critical_y(xs, eta), stable]))
        half = p.h * np.sqrt(sysobj.reduced_manifold(grid, p.x0, p.y0))
        series["band"] = (("t", "lower", "upper"), np.column_stack([t, xd - half, xd + half]))
    return series


def cmd_climate(run, fmt, prov, threads):
    series = _climate_series(run)
    if fmt == "csv":
        return {k: out.csv_text(cols, arr.tolist()) for k, (cols, arr) in series.items()}
    body = {k: {"columns": list(cols), "rows": arr.tolist()} for k, (cols, arr) in series.items()}
    return out.render_json(out.ClimateOut(**prov, preset=run.parameters.system.kind, **body))


HANDLERS = {
    "sample": cmd_sample,
    "fou": cmd_fou,
    "zeta": cmd_zeta,
    "lyapunov": cmd_lyapunov,
    "bounds": cmd_bounds,
    "simulate": cmd_simulate,
    "mc": cmd_mc,
    "climate": cmd_climate,
}


# --- driver -----------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="fracslow", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="config file path or inline JSON document")
    ap.add_argument("--out", help="output path (overrides output.path)")
    ap.add_argument("--format", choices=("csv", "json"))
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--schema", action="store_true", help="print the output JSON schema and exit")
    return ap


def _read_config(source):
    if source.lstrip().startswith("{"):
        return source
    return Path(source).read_text(encoding="utf-8")


def resolve_threads(arg, environ=None):
    environ = os.environ if environ is None else environ
    if arg is not None:
        value, origin = arg, "--threads"
    elif environ.get(THREADS_ENV):
        try:
            value, origin = int(environ[THREADS_ENV]), THREADS_ENV
        except ValueError:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer") from None
    else:
        return 1
    if value < 1:
        raise ConfigurationError(f"{origin} must be >= 1")
    return value


def _resolve_format(args, run, path):
    if args.format:
        return args.format
    if run.output.format:
        return run.output.format
    if path is not None and Path(path).suffix.lower() in (".csv", ".json"):
        return Path(path).suffix.lower()[1:]
    return "json"


def _targets(command, path, fmt):
    if command == "climate" and fmt == "csv":
        base = Path(path)
        stem = base.with_suffix("") if base.suffix.lower() == ".csv" else base
        return {k: f"{stem}_{k}.csv" for k in CLIMATE_PARTS}
    return {None: path}


def run(argv=None, stdout=None, stderr=None):
    """Parse arguments, execute one command and return the exit status."""
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.schema:
        stdout.write(json.dumps(out.output_schema(args.command), indent=1, sort_keys=True) + "\n")
        return 0
    if args.config is None:
        stderr.write("error: --config is required\n")
        return 2
    try:
        text = _read_config(args.config)
        run_cfg = parse_config(text)
        if run_cfg.command != args.command:
            raise ConfigurationError(
                f"command: config is for {run_cfg.command!r}, invoked as {args.command!r}"
            )
        threads = resolve_threads(args.threads)
        update = {}
        if args.seed is not None:
            update["seed"] = args.seed
        elif run_cfg.seed is None and args.command in STOCHASTIC:
            update["seed"] = fresh_seed()
        path = args.out or run_cfg.output.path
        fmt = _resolve_format(args, run_cfg, path)
        update["output"] = run_cfg.output.model_copy(update={"format": fmt, "path": path})
        run_cfg = run_cfg.model_copy(update=update)
    except ValidationError as exc:
        stderr.write(f"invalid config: {format_errors(exc)}\n")
        return 2
    except (OSError, ConfigurationError) as exc:
        stderr.write(f"invalid config: {exc}\n")
        return 2
    digest = config_hash(run_cfg)
    if path is None:
        path = f"fracslow_{args.command}.{fmt}"
    prov = {"config_hash": digest, "seed": run_cfg.seed}
    try:
        result = HANDLERS[args.command](run_cfg, fmt, prov, threads)
    except ConfigurationError as exc:
        stderr.write(f"invalid config: {exc}\n")
        return 2
    except FracSlowError as exc:
        stderr.write(f"{args.command}: {type(exc).__name__}: {exc}\n")
        return 1
    texts = result if isinstance(result, dict) else {None: result}
    targets = _targets(args.command, path, fmt)
    written = []
    for key, text in texts.items():
        atomic_path = targets[key]
        out.atomic_write(atomic_path, text)
        written.append(str(atomic_path))
    seed_note = f" seed={run_cfg.seed}" if run_cfg.seed is not None else ""
    stdout.write(f"{args.command}: wrote {', '.join(written)} config_hash={digest}{seed_note}\n")
    return 0


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
