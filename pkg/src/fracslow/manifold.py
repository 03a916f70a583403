"""Slow-manifold objects: the 1-D variance manifold zeta(t) and the multi-D
critical covariance X* obtained from a Lyapunov equation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import linalg, special

from . import quadrature
from .errors import AccuracyError, DomainError, StabilityError
from .fbm import as_hurst

TAIL = 45.0


def gamma_fn(x):
    """Euler gamma function for x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("gamma_fn requires x > 0")
    out = special.gamma(x)
    return float(out) if out.ndim == 0 else out


def hurst_factor(h):
    """H Gamma(2H); equals 1/2 in the Brownian limit and lies in (1/2, 1) otherwise."""
    H = as_hurst(h).value
    return H * gamma_fn(2 * H)


def zeta_critical(t, a_fn, f_fn, h):
    """Leading-order slow manifold F(t)^2 H Gamma(2H) / |a(t)|^{2H}."""
    H = as_hurst(h)
    a = np.asarray(a_fn(t), dtype=float)
    f = np.asarray(f_fn(t), dtype=float)
    if np.any(a >= 0):
        raise StabilityError("zeta_critical requires a(t) < 0")
    if np.any(f <= 0):
        raise DomainError("zeta_critical requires F(t) > 0")
    out = f**2 * hurst_factor(H) / np.abs(a) ** (2 * H.value)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ZetaManifold:
    """zeta(t) together with bounds zeta_minus <= zeta(t) <= zeta_plus."""

    zeta_fn: Callable
    zeta_plus: float
    zeta_minus: float

    def __post_init__(self):
        if not 0 < self.zeta_minus <= self.zeta_plus:
            raise DomainError("need 0 < zeta_minus <= zeta_plus")

    def __call__(self, t):
        return self.zeta_fn(t)


def zeta_manifold(a_fn, f_fn, h, t_grid, margin=0.01):
    """Sample zeta_critical on ``t_grid`` and widen the range by ``margin``."""
    H = as_hurst(h)
    vals = np.atleast_1d(zeta_critical(np.asarray(t_grid, dtype=float), a_fn, f_fn, H))
    return ZetaManifold(
        lambda t: zeta_critical(t, a_fn, f_fn, H),
        float(vals.max() * (1 + margin)),
        float(vals.min() * (1 - margin)),
    )


def constant_zeta(a, f_amp, h):
    z = float(f_amp) ** 2 * hurst_factor(h) / abs(a) ** (2 * as_hurst(h).value)

    def fn(t):
        return np.full(np.shape(t), z) if np.ndim(t) else z

    return ZetaManifold(fn, z, z)


def spectral_abscissa(a_matrix):
    return float(np.max(np.linalg.eigvals(a_matrix).real))


def _require_stable(a_matrix):
    a_matrix = np.atleast_2d(np.asarray(a_matrix, dtype=float))
    if a_matrix.ndim != 2 or a_matrix.shape[0] != a_matrix.shape[1]:
        raise DomainError("A must be a square matrix")
    if spectral_abscissa(a_matrix) >= 0:
        raise StabilityError("A must have all eigenvalues with negative real part")
    return a_matrix


def lyapunov_solve(a_matrix, c_matrix):
    """Solve A X + X A^T + C = 0 for stable A.

    Small systems use the Kronecker form directly. Larger ones reduce A to
    complex Schur form and back-substitute column by column.
    """
    A = _require_stable(a_matrix)
    C = np.atleast_2d(np.asarray(c_matrix, dtype=float))
    m = A.shape[0]
    if C.shape != (m, m):
        raise DomainError("C must match the shape of A")
    if m <= 2:
        eye = np.eye(m)
        op = np.kron(eye, A) + np.kron(A, eye)
        X = np.linalg.solve(op, -C.reshape(-1, order="F")).reshape(m, m, order="F")
    else:
        T, U = linalg.schur(A.astype(complex), output="complex")
        F = U.conj().T @ C @ U
        Y = np.zeros((m, m), dtype=complex)
        for j in range(m - 1, -1, -1):
            rhs = -F[:, j] - Y[:, j + 1:] @ T[j, j + 1:].conj()
            Y[:, j] = linalg.solve_triangular(T + np.conj(T[j, j]) * np.eye(m), rhs)
        X = (U @ Y @ U.conj().T).real
    if np.allclose(C, C.T, rtol=0, atol=0):
        X = 0.5 * (X + X.T)
    return X


def lyapunov_residual(a_matrix, x_matrix, c_matrix):
    """Scaled residual ||AX + XA^T + C|| / (||A|| ||X|| + ||C||)."""
    A, X, C = (np.asarray(m, dtype=float) for m in (a_matrix, x_matrix, c_matrix))
    r = np.linalg.norm(A @ X + X @ A.T + C)
    return float(r / (np.linalg.norm(A) * np.linalg.norm(X) + np.linalg.norm(C)))


def _q_integral(A, beta, q):
    m = A.shape[0]
    norm = max(np.linalg.norm(A, 2), 1e-300)
    width = 0.5 / norm
    rate = -spectral_abscissa(A)
    u_max = TAIL / rate
    # First panel: Gauss-Jacobi absorbs u^beta.
    first = min(width, u_max)
    xj, wj = quadrature.gauss_jacobi01(q, beta)
    total = first ** (beta + 1) * sum(w * linalg.expm(A * first * x) for x, w in zip(xj, wj))
    n_panels = int(np.ceil((u_max - first) / width))
    if n_panels <= 0:
        return total
    xg, wg = quadrature.gauss_legendre01(q)
    local = np.stack([linalg.expm(A * width * x) for x in xg])
    step = linalg.expm(A * width)
    starts = first + width * np.arange(n_panels)
    coef = width * wg[None, :] * (starts[:, None] + width * xg[None, :]) ** beta
    prop = linalg.expm(A * first)
    acc = np.zeros((m, m))
    for k in range(n_panels):
        acc += prop @ np.tensordot(coef[k], local, axes=1)
        prop = prop @ step
    return total + acc


def q_matrix(a_matrix, h, tol=1e-11):
    """Q = H(2H-1) int_0^inf e^{Au} u^{2H-2} du for stable A."""
    A = _require_stable(a_matrix)
    H = as_hurst(h)
    if H.brownian_limit:
        return 0.5 * np.eye(A.shape[0])
    beta = 2 * H.value - 2
    pref = H.value * (2 * H.value - 1)
    coarse = pref * _q_integral(A, beta, 12)
    fine = pref * _q_integral(A, beta, 20)
    err = np.linalg.norm(fine - coarse)
    if err > tol * np.linalg.norm(fine):
        raise AccuracyError(f"q_matrix error estimate {err:.3e} above tolerance", fine, err)
    return fine


@dataclass(frozen=True)
class MdCriticalCovariance:
    a_matrix: np.ndarray
    q_matrix: np.ndarray
    x_star: np.ndarray
    eigvecs: np.ndarray
    d_star: np.ndarray
    symmetric: bool
    d_star_formula: np.ndarray | None = None

    @property
    def m(self):
        return self.a_matrix.shape[0]

    @property
    def x_star_inv(self):
        return np.linalg.inv(self.x_star)

    def to_dict(self):
        def mat(x):
            return {"shape": list(x.shape), "data": np.asarray(x).ravel().tolist()}

        out = {
            "a_matrix": mat(self.a_matrix),
            "q_matrix": mat(self.q_matrix),
            "x_star": mat(self.x_star),
            "d_star": self.d_star.tolist(),
            "symmetric": self.symmetric,
        }
        if self.d_star_formula is not None:
            out["d_star_formula"] = self.d_star_formula.tolist()
        return out

    def to_json(self):
        return json.dumps(self.to_dict())


def md_critical_covariance(a_matrix, h):
    """X* solving A X + X A^T + (Q + Q^T) = 0, plus its eigensystem."""
    A = _require_stable(a_matrix)
    H = as_hurst(h)
    Q = q_matrix(A, H)
    X = lyapunov_solve(A, Q + Q.T)
    d, vecs = np.linalg.eigh(X)
    sym = bool(np.allclose(A, A.T, rtol=0, atol=1e-14 * np.abs(A).max()))
    formula = None
    if sym:
        a_k = np.linalg.eigvalsh(A)
        formula = np.sort(hurst_factor(H) / np.abs(a_k) ** (2 * H.value))
    return MdCriticalCovariance(A, Q, X, vecs, d, sym, formula)


def neighborhood_contains(x, manifold, h, t=0.0):
    """Membership in B(h): |x| < h sqrt(zeta) in 1-D, <x, X*^{-1} x> < h^2 in m-D.

    ``manifold`` may be a zeta value, a ``ZetaManifold`` (evaluated at t),
    an X* matrix, or an ``MdCriticalCovariance``.
    """
    if not h > 0:
        raise DomainError("h must be > 0")
    if isinstance(manifold, MdCriticalCovariance):
        manifold = manifold.x_star
    if isinstance(manifold, ZetaManifold):
        manifold = manifold(t)
    arr = np.asarray(manifold, dtype=float)
    if arr.ndim == 0:
        if not arr > 0:
            raise DomainError("zeta must be positive")
        return bool(abs(float(x)) < h * np.sqrt(float(arr)))
    try:
        chol = np.linalg.cholesky(arr)
    except np.linalg.LinAlgError:
        raise DomainError("X* must be positive definite") from None
    y = linalg.solve_triangular(chol, np.asarray(x, dtype=float), lower=True)
    return bool(y @ y < h * h)
