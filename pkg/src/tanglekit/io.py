"""Bit-stable JSON/CSV export and document loading."""
from __future__ import annotations

import json
import math
from dataclasses import is_dataclass
from pathlib import Path

import numpy as np

from .hamiltonian import BUILTIN_HAMILTONIANS, HamiltonianSpec, stroboscopic_map
from .maps import LiftedMap, map_from_dict


class ConfigError(ValueError):
    """Invalid or missing configuration input (exit status 2)."""


def _plain(obj):
    """Convert numpy scalars/arrays, tuples and dataclass-like records to JSON-ready values."""
    if hasattr(obj, "to_dict") and not isinstance(obj, type):
        return _plain(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        # integral values print without a fractional part; everything else in shortest round-trip form
        if x.is_integer() and abs(x) < 2**53:
            return int(x)
        return x
    if is_dataclass(obj):
        return _plain(obj.__dict__)
    return obj


def dumps(obj, indent: int | None = None) -> str:
    if indent is None:
        return json.dumps(_plain(obj), separators=(",", ":"), allow_nan=False)
    return json.dumps(_plain(obj), indent=indent, allow_nan=False)


def write_json(obj, path, indent: int | None = 2) -> Path:
    path = Path(path)
    path.write_text(dumps(obj, indent) + "\n")
    return path


def csv_text(header: list[str], rows, comment: str | None = None) -> str:
    lines = [] if comment is None else [f"# {comment}"]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return str(v)


def export(artifact, fmt: str, path=None) -> str:
    """Serialise an artifact as JSON (anything with ``to_dict``) or CSV (branches, crossings, entries)."""
    if fmt == "json":
        text = dumps(artifact) + "\n"
    elif fmt == "csv":
        text = to_csv(artifact)
    else:
        raise ValueError(f"unknown export format {fmt!r}")
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
    return text


def to_csv(artifact) -> str:
    from .manifolds import ManifoldBranch
    from .tangle import CrossingReport, EntrySequence
    from .torus import ClosedCurve, curve_to_csv

    if isinstance(artifact, ManifoldBranch):
        return artifact.to_csv()
    if isinstance(artifact, ClosedCurve):
        return curve_to_csv(artifact)
    if isinstance(artifact, CrossingReport):
        artifact = artifact.crossings
    if isinstance(artifact, EntrySequence):
        rows = [
            (e.arclen, e.chart[0], e.chart[1], e.lift_point[0], e.lift_point[1], e.lattice_class.m, e.lattice_class.n)
            for e in artifact
        ]
        return csv_text(["arclen", "chart_x", "chart_y", "X", "Y", "m", "n"], rows)
    if isinstance(artifact, list):
        rows = [
            (c.u_param, c.s_param, c.point.x, c.point.y, c.angle, c.orient, c.offset[0], c.offset[1])
            for c in artifact
        ]
        return csv_text(["u_param", "s_param", "x", "y", "angle", "orient", "offset_m", "offset_n"], rows)
    raise TypeError(f"no CSV form for {type(artifact).__name__}")


# -- document loading -----------------------------------------------------------


def read_json(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {p}: {exc}") from exc


def load_map(doc_or_path) -> LiftedMap:
    doc = doc_or_path if isinstance(doc_or_path, dict) else read_json(doc_or_path)
    try:
        return map_from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid map document: {exc}") from exc


def load_hamiltonian(ref) -> HamiltonianSpec:
    """A Hamiltonian from a builtin name, a document, or a file path."""
    if isinstance(ref, str) and ref in BUILTIN_HAMILTONIANS:
        return BUILTIN_HAMILTONIANS[ref]
    doc = ref if isinstance(ref, (dict, list)) else read_json(ref)
    try:
        return HamiltonianSpec.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid Hamiltonian document: {exc}") from exc


def hamiltonian_map(ref, steps: int) -> LiftedMap:
    return stroboscopic_map(load_hamiltonian(ref), steps)
