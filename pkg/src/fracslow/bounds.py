"""Exit-probability bounds for the deviation from the slow manifold.

Every (1 + O(eps)) factor whose constant is unknown is set to 1 and listed in
``BoundReport.dropped_terms``. Values are never clamped to 1; a value >= 1
is flagged as vacuous instead.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError, HTooLargeError
from .fbm import as_hurst
from .manifold import hurst_factor

FORMULAS = (
    "single_time",
    "bernstein",
    "variant1",
    "variant2",
    "nonlinear_variant1",
    "md_general",
    "md_symmetric",
)

DROP_EPS = "(1+O(eps)) set to 1"


@dataclass(frozen=True)
class BoundInputs:
    t: float | None = None
    h: float | None = None
    sigma: float | None = None
    eps: float | None = None
    hurst: float | None = None
    alpha_t: float | None = None
    a_plus: float | None = None
    m: int | None = None
    f_plus: float | None = None
    a_low: float | None = None
    big_m: float | None = None
    zeta_plus: float | None = None
    zeta_minus: float | None = None
    k_const: float | None = None
    lambda_weights: tuple | None = None

    def __post_init__(self):
        for name in ("h", "sigma", "eps"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise DomainError(f"{name} must be > 0, got {v}")
        if self.lambda_weights is not None:
            lw = np.asarray(self.lambda_weights, dtype=float)
            if np.any(lw < 0) or not math.isclose(lw.sum(), 1.0, rel_tol=0, abs_tol=1e-12):
                raise DomainError("lambda_weights must be nonnegative and sum to 1")
            object.__setattr__(self, "lambda_weights", tuple(float(x) for x in lw))

    def require(self, *names):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ConfigurationError(f"missing bound inputs: {', '.join(missing)}")
        return [getattr(self, n) for n in names]

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()
                if v is not None}


@dataclass(frozen=True)
class BoundReport:
    value: float
    formula_id: str
    dropped_terms: tuple = field(default_factory=tuple)
    inputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.value >= 0:
            raise DomainError(f"bound value must be >= 0, got {self.value}")

    @property
    def vacuous(self):
        return self.value >= 1.0

    def to_dict(self):
        return {
            "formula_id": self.formula_id,
            "value": self.value,
            "vacuous": self.vacuous,
            "dropped_terms": list(self.dropped_terms),
            "inputs": self.inputs,
        }


def _gauss_tail(h, sigma, weight=1.0):
    return math.exp(-weight * h * h / (2.0 * sigma * sigma))


def _ceil_count(rate, h, sigma):
    """Ceiling of rate * h^2 / sigma^2, at least 1 for any positive argument."""
    return max(1, math.ceil(rate * h * h / (sigma * sigma)))


def single_time_bound(h, sigma):
    """P(|xi_t| / sqrt(zeta(t)) >= h) <= exp(-h^2 / 2 sigma^2)."""
    BoundInputs(h=h, sigma=sigma)
    return BoundReport(_gauss_tail(h, sigma), "single_time", (), {"h": h, "sigma": sigma})


def bernstein_exit_bound(c, var_t):
    """P(tau_c < t) <= exp(-c^2 / (2 Var(Y_t)))."""
    if not c > 0 or not var_t > 0:
        raise DomainError("c and var_t must be > 0")
    return BoundReport(math.exp(-c * c / (2.0 * var_t)), "bernstein", (), {"c": c, "var_t": var_t})


def variant1_bound(inputs):
    """2e ceil((alpha_t / eps) h^2 / sigma^2) exp(-h^2 / 2 sigma^2)."""
    alpha_t, eps, h, sigma = inputs.require("alpha_t", "eps", "h", "sigma")
    if not alpha_t > 0:
        raise DomainError("alpha_t must be > 0")
    n = _ceil_count(alpha_t / eps, h, sigma)
    value = 2.0 * math.e * n * _gauss_tail(h, sigma)
    return BoundReport(value, "variant1", (DROP_EPS,), inputs.to_dict())


def variant2_bound(inputs):
    """K t h^{1/H} (F+^2 H Gamma(2H) / a^{2H})^{1/2H} exp(-h^2 / 2 sigma^2).

    K has no theoretical value and must be supplied.
    """
    if inputs.k_const is None:
        raise ConfigurationError("variant2 requires k_const (K has no theoretical value)")
    k, t, h, sigma, H, f_plus, a_low = inputs.require(
        "k_const", "t", "h", "sigma", "hurst", "f_plus", "a_low")
    H = as_hurst(H).value
    if not (k > 0 and f_plus > 0 and a_low > 0 and t >= 0):
        raise DomainError("variant2 needs k_const, f_plus, a_low > 0 and t >= 0")
    scale = (f_plus**2 * hurst_factor(H) / a_low ** (2 * H)) ** (1 / (2 * H))
    value = k * t * h ** (1 / H) * scale * _gauss_tail(h, sigma)
    dropped = ("exp((h^2/2sigma^2) O(eps)) set to 1", "O(eps) inside the manifold factor set to 0")
    return BoundReport(value, "variant2", dropped, inputs.to_dict())


def kappa(inputs):
    """kappa = 1 - 2 M h zeta+ / (a sqrt(zeta-))."""
    big_m, h, a_low, zp, zm = inputs.require("big_m", "h", "a_low", "zeta_plus", "zeta_minus")
    if big_m < 0 or not (a_low > 0 and zp > 0 and zm > 0):
        raise DomainError("need big_m >= 0 and a_low, zeta_plus, zeta_minus > 0")
    return 1.0 - 2.0 * big_m * h * zp / (a_low * math.sqrt(zm))


def nonlinear_variant1_bound(inputs):
    """Variant 1 with h replaced by kappa h, accounting for the Taylor remainder."""
    k = kappa(inputs)
    if k <= 0:
        limit = inputs.a_low * math.sqrt(inputs.zeta_minus) / (2 * inputs.big_m * inputs.zeta_plus)
        raise HTooLargeError(f"kappa = {k:.4g} <= 0: need h < {limit:.6g}")
    alpha_t, eps, h, sigma = inputs.require("alpha_t", "eps", "h", "sigma")
    if not alpha_t > 0:
        raise DomainError("alpha_t must be > 0")
    kh = k * h
    n = _ceil_count(alpha_t / eps, kh, sigma)
    value = 2.0 * math.e * n * _gauss_tail(kh, sigma)
    dropped = (DROP_EPS, "kappa = 1 - 2 M h zeta+/(a sqrt(zeta-)) from h1 = 2 M h^2 zeta+/(a sqrt(zeta-))")
    return BoundReport(value, "nonlinear_variant1", dropped, {**inputs.to_dict(), "kappa": k})


def md_general_bound(inputs, d_star, prefactor="literal"):
    """Sum_k K t P_k^{1/H} exp(-lambda_k h^2 / 2 sigma^2).

    ``prefactor='literal'`` uses P_k = sqrt(lambda_k h) d*_k as printed;
    ``prefactor='alternative'`` uses P_k = sqrt(lambda_k) h sqrt(d*_k).
    """
    if prefactor not in ("literal", "alternative"):
        raise DomainError("prefactor must be 'literal' or 'alternative'")
    if inputs.k_const is None:
        raise ConfigurationError("md_general requires k_const")
    k, t, h, sigma, H = inputs.require("k_const", "t", "h", "sigma", "hurst")
    H = as_hurst(H).value
    d = np.asarray(d_star, dtype=float).ravel()
    if np.any(d <= 0):
        raise DomainError("d_star must be positive")
    lw = np.asarray(inputs.lambda_weights if inputs.lambda_weights else np.full(d.size, 1 / d.size))
    if lw.size != d.size:
        raise DomainError("lambda_weights and d_star lengths differ")
    if prefactor == "literal":
        pre = np.sqrt(lw * h) * d
    else:
        pre = np.sqrt(lw) * h * np.sqrt(d)
    terms = k * t * pre ** (1 / H) * np.exp(-lw * h * h / (2 * sigma * sigma))
    value = float(math.fsum(terms))
    dropped = ("(1-O(eps)) set to 1", f"prefactor reading: {prefactor}")
    extra = {"d_star": d.tolist(), "lambda_weights": lw.tolist(), "prefactor": prefactor}
    return BoundReport(value, "md_general", dropped, {**inputs.to_dict(), **extra})


def md_symmetric_bound(inputs):
    """2e ceil((a+ t / eps) h^2 / sigma^2) exp(-h^2 / (2 sigma^2 m))."""
    a_plus, t, eps, h, sigma, m = inputs.require("a_plus", "t", "eps", "h", "sigma", "m")
    if not (a_plus > 0 and t > 0) or int(m) != m or m < 1:
        raise DomainError("need a_plus, t > 0 and integer m >= 1")
    n = _ceil_count(a_plus * t / eps, h, sigma)
    value = 2.0 * math.e * n * _gauss_tail(h, sigma, 1.0 / m)
    dropped = (DROP_EPS, "lambda_k = 1/m")
    return BoundReport(value, "md_symmetric", dropped, inputs.to_dict())


def evaluate(formula_id, inputs, d_star=None, prefactor="literal"):
    """Dispatch by formula id."""
    if formula_id == "single_time":
        return single_time_bound(*inputs.require("h", "sigma"))
    if formula_id == "variant1":
        return variant1_bound(inputs)
    if formula_id == "variant2":
        return variant2_bound(inputs)
    if formula_id == "nonlinear_variant1":
        return nonlinear_variant1_bound(inputs)
    if formula_id == "md_symmetric":
        return md_symmetric_bound(inputs)
    if formula_id == "md_general":
        if d_star is None:
            raise ConfigurationError("md_general requires d_star")
        return md_general_bound(inputs, d_star, prefactor)
    raise ConfigurationError(f"unknown or non-dispatchable formula_id {formula_id!r}")
