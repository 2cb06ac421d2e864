"""Scenario documents: a map, an ordered list of operations, and their artifacts.

Every stage result goes into ``summary.json``; bulky outputs (branches,
crossings, entry sequences) are written as CSV next to it.  Apart from the
``timestamp`` field the output depends only on the document and the seed.
"""
from __future__ import annotations

import datetime as _dt
import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .flux import circle_distance, flux_vector
from .io import ConfigError, export, hamiltonian_map, load_map, read_json, write_json
from .manifolds import GrowthSettings, branch_invariance_residual, grow_branch
from .maps import compose
from .orbits import find_periodic_orbits
from .perturbations import NudgeSpec, local_nudge, rationalize_flux
from .tangle import WedgeRegion, find_crossings, wedge_entries
from .torus import reduce

OPERATIONS = ("flux", "orbits", "manifold", "tangle", "wedge", "perturb", "hamiltonian-audit")

SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "map": {"type": ["object", "string"]},
        "hamiltonian": {"type": ["object", "array", "string"]},
        "steps": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "output": {"type": "string"},
        "workers": {"type": "integer", "minimum": 1},
        "tolerances": {"type": "object", "additionalProperties": {"type": "number", "exclusiveMinimum": 0}},
        "operations": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {"op": {"enum": list(OPERATIONS)}},
                "required": ["op"],
            },
        },
    },
    "required": ["operations"],
    "additionalProperties": False,
}

# operations that need the periodic orbits found by an earlier stage
NEEDS_ORBITS = {"manifold", "tangle", "wedge"}


def bundled_scenarios() -> list[str]:
    root = resources.files("tanglekit") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_scenario(ref) -> tuple[dict, Path]:
    """A scenario document and the directory relative paths resolve against."""
    if isinstance(ref, dict):
        return ref, Path.cwd()
    p = Path(ref)
    if p.is_file():
        return read_json(p), p.parent
    if str(ref) in bundled_scenarios():
        text = (resources.files("tanglekit") / "scenarios" / f"{ref}.json").read_text()
        return json.loads(text), Path.cwd()
    raise ConfigError(f"scenario not found: {ref}")


def validate(config: dict, base_dir: Path) -> None:
    try:
        jsonschema.validate(config, SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid scenario: {exc.message}") from exc
    for key in ("map", "hamiltonian"):
        ref = config.get(key)
        if isinstance(ref, str) and not (key == "hamiltonian" and _is_builtin(ref)):
            path = (base_dir / ref) if not Path(ref).is_absolute() else Path(ref)
            if not path.is_file():
                raise ConfigError(f"{key} file not found: {path}")
    ops = [o["op"] for o in config["operations"]]
    needs_map = any(op != "hamiltonian-audit" for op in ops)
    if needs_map and "map" not in config and "hamiltonian" not in config:
        raise ConfigError("scenario needs a 'map' or 'hamiltonian' entry")
    seen_orbits = False
    for op in ops:
        if op in NEEDS_ORBITS and not seen_orbits:
            raise ConfigError(f"operation '{op}' requires an earlier 'orbits' operation")
        seen_orbits |= op == "orbits"


def _is_builtin(name: str) -> bool:
    from .hamiltonian import BUILTIN_HAMILTONIANS

    return name in BUILTIN_HAMILTONIANS


class _Run:
    def __init__(self, config: dict, base_dir: Path, out: Path, workers: int):
        self.cfg = config
        self.base_dir = base_dir
        self.out = out
        self.workers = workers
        self.seed = int(config.get("seed", 0))
        self.tol = dict(config.get("tolerances", {}))
        self.f = None
        self.orbits = None
        self.branches = {}

    def resolve(self, ref):
        if isinstance(ref, str):
            p = Path(ref)
            return p if p.is_absolute() else self.base_dir / p
        return ref

    def load(self):
        cfg = self.cfg
        if "map" in cfg:
            self.f = load_map(self.resolve(cfg["map"]))
        elif "hamiltonian" in cfg:
            ref = cfg["hamiltonian"]
            ref = ref if isinstance(ref, (dict, list)) or _is_builtin(ref) else self.resolve(ref)
            self.f = hamiltonian_map(ref, int(cfg.get("steps", 256)))

    def branch(self, index, kind, sign, L_max):
        key = (index, kind, sign, float(L_max))
        if key not in self.branches:
            orbit = self._orbit(index)
            self.branches[key] = grow_branch(orbit, kind, sign, GrowthSettings(L_max=float(L_max)), self.f)
        return self.branches[key]

    def _orbit(self, index):
        if index >= len(self.orbits):
            raise IndexError(f"orbit index {index} out of range ({len(self.orbits)} orbits)")
        return self.orbits[index]

    # -- stages ------------------------------------------------------------------

    def op_flux(self, p):
        fv = flux_vector(self.f, tol=self.tol.get("duality", 1e-6))
        rng = np.random.default_rng(self.seed)
        pts = rng.random((int(p.get("audit_samples", 100)), 2))
        det = np.linalg.det(self.f.jacobian(pts))
        return {"flux": fv.to_dict(), "area_audit_max_det_error": float(np.max(np.abs(det - 1.0)))}

    def op_orbits(self, p):
        self.orbits = find_periodic_orbits(
            self.f, int(p.get("period", 1)), tuple(p.get("type", (0, 0))), int(p.get("grid_n", 16)),
            self.tol.get("orbit_residual", 1e-11), self.workers,
        )
        return {"count": len(self.orbits), "orbits": [o.to_dict() for o in self.orbits]}

    def op_manifold(self, p, tag):
        kind = {"u": "unstable", "s": "stable"}.get(p.get("kind", "u"), p.get("kind"))
        sign = 1 if str(p.get("sign", "+")) in ("+", "1", "+1") else -1
        b = self.branch(int(p.get("orbit_index", 0)), kind, sign, p.get("L_max", 50.0))
        name = f"{tag}_branch.csv"
        export(b, "csv", self.out / name)
        res = branch_invariance_residual(b, self.f)
        return {"branch": b.summary(), "invariance_residual": res, "files": [name]}

    def op_tangle(self, p, tag):
        i = int(p.get("orbit_index", 0))
        L = p.get("L_max", 30.0)
        bu = self.branch(i, "unstable", 1, L)
        bs = self.branch(i, "stable", 1, L)
        rep = find_crossings(bu, bs, float(p.get("exclude", 1e-3)), f=self.f if p.get("refine", True) else None,
                             workers=self.workers)
        name = f"{tag}_crossings.csv"
        export(rep, "csv", self.out / name)
        transversal = sum(1 for c in rep if c.angle > 1e-3)
        return {
            "crossings": len(rep.crossings),
            "transversal": transversal,
            "suspects": len(rep.suspects),
            "max_angle": max((c.angle for c in rep), default=0.0),
            "first": rep.crossings[0].to_dict() if rep.crossings else None,
            "files": [name],
        }

    def op_wedge(self, p, tag):
        i = int(p.get("orbit_index", 0))
        bu = self.branch(i, "unstable", 1, p.get("L_max", 40.0))
        w = WedgeRegion.at_orbit(self._orbit(i), float(p.get("eta", 0.05)), float(p.get("delta", 0.01)))
        cf = p.get("class_filter")
        seq = wedge_entries(bu, w, None if cf is None else tuple(cf), f=self.f)
        name = f"{tag}_entries.csv"
        export(seq, "csv", self.out / name)
        return {"entries": [e.to_dict() for e in seq], "diagnostic": seq.diagnostic, "files": [name]}

    def op_perturb(self, p, tag):
        mode = p.get("mode", "rationalize")
        if mode == "rationalize":
            g, fv = rationalize_flux(self.f, int(p.get("denominator", 8)))
        elif mode == "nudge":
            spec = NudgeSpec(reduce(p["center"]), reduce(p["target"]), float(p["radius"]),
                             float(p.get("core_fraction", 0.5)))
            g = compose(self.f, local_nudge(spec, int(p.get("steps", 64))))
            fv = flux_vector(g)
        else:
            raise ValueError(f"unknown perturbation mode {mode!r}")
        name = f"{tag}_map.json"
        write_json(g.to_dict(), self.out / name)
        if p.get("replace", False):
            self.f = g
        return {"mode": mode, "flux": fv.to_dict(), "files": [name]}

    def op_hamiltonian_audit(self, p):
        from .hamiltonian import BUILTIN_HAMILTONIANS

        names = p.get("hamiltonians") or ["cos_product", "driven_pendulum", "mixed_modes"]
        steps = [int(s) for s in p.get("steps", [256, 512])]
        rows = []
        for name in names:
            for n in steps:
                fv = flux_vector(hamiltonian_map(name if name in BUILTIN_HAMILTONIANS else self.resolve(name), n))
                norm = float(np.hypot(circle_distance(fv.phi_a, 0.0), circle_distance(fv.phi_b, 0.0)))
                rows.append({"hamiltonian": name, "steps": n, "flux": fv.to_dict(), "norm": norm})
        return {"audit": rows}


def run_scenario(config, out_dir=None, workers: int | None = None, seed: int | None = None) -> int:
    """Execute a scenario; returns the exit status (0 ok, 1 stage failure, 2 configuration error)."""
    try:
        cfg, base_dir = load_scenario(config)
        cfg = dict(cfg)
        if seed is not None:
            cfg["seed"] = int(seed)
        validate(cfg, base_dir)
    except ConfigError as exc:
        _report(f"configuration error: {exc}")
        return 2
    out = Path(out_dir or cfg.get("output", "tanglekit_out"))
    out.mkdir(parents=True, exist_ok=True)
    run = _Run(cfg, base_dir, out, int(workers or cfg.get("workers", 1)))
    summary = {
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "tanglekit": __version__,
        "scenario": cfg.get("name", ""),
        "seed": run.seed,
        "status": "ok",
        "stages": [],
    }
    status = 0
    try:
        run.load()
    except ConfigError as exc:
        _report(f"configuration error: {exc}")
        return 2
    for n, op in enumerate(cfg["operations"]):
        name = op["op"]
        tag = f"{n:02d}_{name}"
        params = {k: v for k, v in op.items() if k != "op"}
        try:
            method = getattr(run, "op_" + name.replace("-", "_"))
            result = method(params, tag) if name in ("manifold", "tangle", "wedge", "perturb") else method(params)
        except Exception as exc:  # any numeric failure ends the run with the stage named
            summary["stages"].append({"stage": tag, "op": name, "status": "failed", "error": str(exc)})
            summary["status"] = "failed"
            summary["failed_stage"] = tag
            _report(f"stage {tag} failed: {exc}")
            status = 1
            break
        summary["stages"].append({"stage": tag, "op": name, "status": "ok", "params": params, "result": result})
    write_json(summary, out / "summary.json")
    return status


def _report(msg: str) -> None:
    import sys

    print(f"tanglekit: {msg}", file=sys.stderr)
