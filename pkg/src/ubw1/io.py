"""CSV tables and solution JSON with exact-round-trip number formatting."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .discrepancy import LocalDiscrepancy, catalog, custom_pwl
from .errors import UbwError, ValidationError
from .measures import Coupling, DiscreteMeasure, measure_from_json, measure_to_json
from .transport import TransportSolution


class IoError(UbwError, OSError):
    pass


def format_real(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        v = float(x)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v + 0.0:.17g}"
    return str(x)


def render_table(rows: Iterable[Sequence], schema: Sequence[str], provenance: Mapping[str, object] | None = None) -> str:
    buf = io.StringIO()
    for key, value in (provenance or {}).items():
        buf.write(f"# {key}={format_real(value)}\n")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(schema)
    for row in rows:
        row = list(row)
        if len(row) != len(schema):
            raise ValidationError(f"row has {len(row)} fields, schema has {len(schema)}")
        writer.writerow([format_real(v) for v in row])
    return buf.getvalue()


def emit_table(rows: Iterable[Sequence], schema: Sequence[str], path, provenance: Mapping[str, object] | None = None) -> None:
    text = render_table(rows, schema, provenance)
    try:
        Path(path).write_text(text, newline="")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


# -- JSON ------------------------------------------------------------------------

def _num(x: float):
    v = float(x)
    if math.isfinite(v):
        return v
    return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")


def _unnum(x) -> float:
    return float(x)


def load_model(name: str | None = None, model_file: str | None = None) -> LocalDiscrepancy:
    if model_file:
        try:
            with open(model_file) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise IoError(f"cannot read {model_file}: {exc.strerror or exc}") from exc
        return model_from_json(doc)
    if not name:
        raise ValidationError("a model name or a model file is required")
    return catalog(name)


def model_from_json(doc: Mapping) -> LocalDiscrepancy:
    if "h_s" not in doc:
        if "model" in doc:
            return catalog(str(doc["model"]))
        raise ValidationError("model file needs an 'h_s' object or a 'model' name")
    profile = doc["h_s"]
    try:
        bps, vals = profile["breakpoints"], profile["values"]
    except (KeyError, TypeError) as exc:
        raise ValidationError("'h_s' needs 'breakpoints' and 'values'") from exc
    return custom_pwl(bps, vals, closed_left=bool(profile.get("closed_left", False)), name=str(doc.get("name", "custom_pwl")))


def solution_to_json(sol: TransportSolution, model: Mapping | None = None) -> dict:
    return {
        "model": dict(model) if model else {"model": sol.model},
        "rho0": measure_to_json(sol.rho0),
        "rho1": measure_to_json(sol.rho1),
        "pi0": [[_num(v) for v in row] for row in sol.pi0.matrix],
        "pi1": [[_num(v) for v in row] for row in sol.pi1.matrix],
        "alpha": [_num(v) for v in sol.alpha],
        "beta": [_num(v) for v in sol.beta],
        "value_bracket": [_num(sol.dual_value), _num(sol.primal_value)],
        "gap": _num(sol.gap),
        "partition": list(sol.partition),
        "lp_value": _num(sol.lp_value),
        "rounds": int(sol.rounds),
        "notes": list(sol.notes),
    }


def solution_from_json(doc: Mapping) -> tuple[TransportSolution, LocalDiscrepancy]:
    try:
        rho0 = measure_from_json(doc["rho0"])
        rho1 = measure_from_json(doc["rho1"], rho0.space)
        space = rho0.space
        pi0 = np.array([[_unnum(v) for v in row] for row in doc["pi0"]])
        pi1 = np.array([[_unnum(v) for v in row] for row in doc["pi1"]])
        dual, primal = (_unnum(v) for v in doc["value_bracket"])
        disc = model_from_json(doc["model"])
        sol = TransportSolution(
            rho0=rho0,
            rho1=rho1,
            pi0=Coupling(space, pi0),
            pi1=Coupling(space, pi1),
            rho0p=DiscreteMeasure(space, pi0.sum(axis=0)),
            rho1p=DiscreteMeasure(space, pi1.sum(axis=1)),
            alpha=np.array([_unnum(v) for v in doc["alpha"]]),
            beta=np.array([_unnum(v) for v in doc["beta"]]),
            primal_value=primal,
            dual_value=dual,
            gap=_unnum(doc.get("gap", primal - dual)),
            partition=tuple(doc.get("partition", ())),
            model=disc.name,
            lp_value=_unnum(doc.get("lp_value", "nan")),
            rounds=int(doc.get("rounds", 0)),
            notes=tuple(doc.get("notes", ())),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"solution file is missing a field: {exc}") from exc
    return sol, disc


def write_json(doc, path) -> None:
    try:
        Path(path).write_text(json.dumps(doc, indent=1, allow_nan=False) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc.msg}") from exc
