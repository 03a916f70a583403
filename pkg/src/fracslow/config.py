"""Strict run-configuration models for the command-line tool.

Physical parameters (sigma, eps, H and model constants) never have defaults.
Unknown keys are rejected everywhere.
"""

from __future__ import annotations

import hashlib
import json
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, model_validator

from .bounds import FORMULAS

COMMANDS = ("sample", "fou", "zeta", "lyapunov", "bounds", "simulate", "mc", "climate")


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", strict=True, frozen=True)


Positive = Annotated[float, Field(gt=0)]
Hurst = Annotated[float, Field(ge=0.5, lt=1)]
Seed = Annotated[int, Field(ge=0, le=2**64 - 1)]
Matrix = list[list[float]]


class OutputSpec(Strict):
    path: str | None = None
    format: Literal["csv", "json"] | None = None


class GridParams(Strict):
    dt: Positive
    n: Annotated[int, Field(ge=1)]


class HurstMixin(Strict):
    hurst: Hurst
    brownian_limit: bool = False

    @model_validator(mode="after")
    def _brownian(self):
        check_brownian(self.hurst, self.brownian_limit)
        return self


def check_brownian(hurst, brownian_limit):
    if brownian_limit and hurst != 0.5:
        raise ValueError("brownian_limit requires hurst = 0.5")
    if hurst == 0.5 and not brownian_limit:
        raise ValueError("hurst = 0.5 needs brownian_limit = true")


class SampleParams(HurstMixin):
    grid: GridParams
    method: Literal["cholesky", "circulant"]
    m: Annotated[int, Field(ge=1)] = 1


class FouParams(HurstMixin):
    a: Annotated[float, Field(lt=0)]
    f_amp: Positive
    eps: Positive
    sigma: Positive
    times: Annotated[list[Annotated[float, Field(ge=0)]], Field(min_length=1)]
    tol: Positive = 1e-8
    ode: bool = True


class ZetaParams(HurstMixin):
    a: Annotated[float, Field(lt=0)]
    f_amp: Positive


class LyapunovParams(Strict):
    a_matrix: Matrix
    hurst: Hurst | None = None
    brownian_limit: bool = False
    c_matrix: Matrix | None = None

    @model_validator(mode="after")
    def _needs_hurst(self):
        if self.c_matrix is None and self.hurst is None:
            raise ValueError("hurst is required unless c_matrix is given")
        if self.hurst is not None:
            check_brownian(self.hurst, self.brownian_limit)
        return self


class BoundsParams(Strict):
    formula: Literal[FORMULAS]  # type: ignore[valid-type]
    h: Positive | Annotated[list[Positive], Field(min_length=1)]
    sigma: Positive | None = None
    eps: Positive | None = None
    t: Annotated[float, Field(ge=0)] | None = None
    hurst: Hurst | None = None
    alpha_t: Positive | None = None
    a_plus: Positive | None = None
    m: Annotated[int, Field(ge=1)] | None = None
    f_plus: Positive | None = None
    a_low: Positive | None = None
    big_m: Annotated[float, Field(ge=0)] | None = None
    zeta_plus: Positive | None = None
    zeta_minus: Positive | None = None
    k_const: Positive | None = None
    lambda_weights: list[Annotated[float, Field(ge=0)]] | None = None
    d_star: list[Positive] | None = None
    prefactor: Literal["literal", "alternative"] = "literal"
    c: Positive | None = None
    var_t: Positive | None = None


class Linear1dSystem(HurstMixin):
    kind: Literal["linear_1d"]
    a: Annotated[float, Field(lt=0)]
    f_amp: Positive
    eps: Positive
    sigma: Annotated[float, Field(ge=0)]
    x_star: float = 0.0


class LinearMdSystem(HurstMixin):
    kind: Literal["linear_md"]
    a_matrix: Matrix
    eps: Positive
    sigma: Annotated[float, Field(ge=0)]


class ClimateFullSystem(HurstMixin):
    kind: Literal["climate_full"]
    sigma1: Annotated[float, Field(ge=0)]
    sigma2: Annotated[float, Field(ge=0)]
    eps: Positive
    mu: float
    eta_sq: Annotated[float, Field(ge=0)]
    hurst2: Hurst | None = None


class ClimateReducedSystem(HurstMixin):
    kind: Literal["climate_reduced"]
    sigma2: Annotated[float, Field(ge=0)] | Literal["periodic"]
    eps: Positive
    eta_sq: Positive
    g_slow: Annotated[list[float], Field(min_length=3, max_length=3)]


System = Annotated[
    Union[Linear1dSystem, LinearMdSystem, ClimateFullSystem, ClimateReducedSystem],
    Field(discriminator="kind"),
]


class SimulateParams(Strict):
    system: System
    grid: GridParams
    x0: float | list[float]
    y0: float = 0.0
    reference: Literal["critical", "deterministic"] = "critical"
    h: Positive | None = None
    method: Literal["cholesky", "circulant"] = "circulant"


class McParams(Strict):
    system: System
    grid: GridParams
    x0: float | list[float]
    y0: float = 0.0
    reference: Literal["critical", "deterministic"] = "critical"
    replicas: Annotated[int, Field(ge=1)]
    h_levels: Annotated[list[Positive], Field(min_length=1)]
    bounds: list[Literal[FORMULAS]] = []  # type: ignore[valid-type]
    ci_level: Annotated[float, Field(gt=0, lt=1)] = 0.99
    method: Literal["cholesky", "circulant"] = "circulant"
    chunk: Annotated[int, Field(ge=1)] = 1000
    k_const: Positive | None = None
    big_m: Annotated[float, Field(ge=0)] | None = None
    prefactor: Literal["literal", "alternative"] = "literal"


class ClimateParams(Strict):
    system: Annotated[Union[ClimateFullSystem, ClimateReducedSystem], Field(discriminator="kind")]
    grid: GridParams
    x0: float
    y0: float
    h: Positive
    method: Literal["cholesky", "circulant"] = "circulant"


class _Run(Strict):
    output: OutputSpec = OutputSpec()
    seed: Seed | None = None


class SampleRun(_Run):
    command: Literal["sample"]
    parameters: SampleParams


class FouRun(_Run):
    command: Literal["fou"]
    parameters: FouParams


class ZetaRun(_Run):
    command: Literal["zeta"]
    parameters: ZetaParams


class LyapunovRun(_Run):
    command: Literal["lyapunov"]
    parameters: LyapunovParams


class BoundsRun(_Run):
    command: Literal["bounds"]
    parameters: BoundsParams


class SimulateRun(_Run):
    command: Literal["simulate"]
    parameters: SimulateParams


class McRun(_Run):
    command: Literal["mc"]
    parameters: McParams


class ClimateRun(_Run):
    command: Literal["climate"]
    parameters: ClimateParams


RunConfig = Annotated[
    Union[SampleRun, FouRun, ZetaRun, LyapunovRun, BoundsRun, SimulateRun, McRun, ClimateRun],
    Field(discriminator="command"),
]
RUN_ADAPTER = TypeAdapter(RunConfig)


def parse_config(text):
    """Validate a JSON document into a run model (raises pydantic.ValidationError)."""
    return RUN_ADAPTER.validate_json(text)


def config_hash(run):
    """sha256 of the canonical (sorted-key, compact) JSON of the validated config.

    The output path is excluded: it names the artifact rather than shaping it.
    """
    doc = run.model_dump(mode="json")
    doc["output"].pop("path", None)
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def format_errors(err):
    """One line per validation problem, with a dotted field path."""
    lines = []
    for e in err.errors(include_url=False):
        loc = ".".join(str(p) for p in e["loc"])
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)
