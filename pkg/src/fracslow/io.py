"""Artifact emission: output JSON models (with published schemas), CSV text
and atomic file writes."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from typing import Union

from pydantic import BaseModel, ConfigDict, TypeAdapter


class Out(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Provenance(Out):
    config_hash: str
    seed: int | None = None


class GridOut(Out):
    t0: float
    dt: float
    n: int


class SampleOut(Provenance):
    grid: GridOut
    hurst: float
    method: str
    values: list[float] | list[list[float]]


class FouRowOut(Out):
    t: float
    var_quadrature: float
    var_ode: float | None
    zeta: float
    relation_rhs: float


class FouOut(Provenance):
    rows: list[FouRowOut]


class ZetaOut(Provenance):
    zeta: float
    hurst_factor: float


class MatrixOut(Out):
    shape: list[int]
    data: list[float]


class LyapunovOut(Provenance):
    x: MatrixOut
    residual: float
    q_matrix: MatrixOut | None = None
    d_star: list[float] | None = None
    d_star_formula: list[float] | None = None
    symmetric: bool | None = None


class BoundOut(Out):
    formula_id: str
    value: float
    vacuous: bool
    dropped_terms: list[str]
    inputs: dict


class BoundSingleOut(BoundOut, Provenance):
    pass


class BoundSweepOut(Provenance):
    sweep: list[BoundOut]


class TrajectoryOut(Provenance):
    grid: GridOut
    t: list[float]
    x: list[float] | list[list[float]]
    y: list[float]
    xi: list[float] | list[list[float]]
    in_neighborhood: list[bool] | None = None


class EstimateOut(Out):
    h: float
    p_hat: float
    ci: list[float]
    exits: int
    replicas: int


class BoundSummaryOut(Out):
    h: float
    formula_id: str
    value: float
    vacuous: bool


class DominanceOut(Out):
    h: float
    formula_id: str
    status: str


class McOut(Provenance):
    config: dict
    estimates: list[EstimateOut]
    bounds: list[BoundSummaryOut]
    dominance: list[DominanceOut]
    failed: bool


class Series(Out):
    columns: list[str]
    rows: list[list[float]]


class ClimateOut(Provenance):
    preset: str
    trajectory: Series
    deterministic: Series
    critical_manifold: Series
    band: Series


OUTPUT_MODELS = {
    "sample": SampleOut,
    "fou": FouOut,
    "zeta": ZetaOut,
    "lyapunov": LyapunovOut,
    "bounds": Union[BoundSingleOut, BoundSweepOut],
    "simulate": TrajectoryOut,
    "mc": McOut,
    "climate": ClimateOut,
}


def output_schema(command):
    """JSON Schema of the JSON artifact written by ``command``."""
    return TypeAdapter(OUTPUT_MODELS[command]).json_schema()


def render_json(model):
    """Deterministic JSON text (sorted keys, trailing newline)."""
    data = model.model_dump(mode="json")
    return json.dumps(data, sort_keys=True, indent=1, allow_nan=False) + "\n"


def _cell(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(columns, rows):
    """Comma-separated, header row, LF line endings, shortest round-trip floats."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def atomic_write(path, text):
    """Write via a temporary file in the target directory, then rename."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=folder)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
