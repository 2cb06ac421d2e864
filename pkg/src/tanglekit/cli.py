"""The ``tanglekit`` command line.

Exit status: 0 success, 1 numeric failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .flux import FluxError, circle_distance, converged_rotation, flux_across_curve, flux_vector
from .io import ConfigError, dumps, export, hamiltonian_map, load_map, write_json
from .manifolds import GrowthSettings, ManifoldError, branch_invariance_residual, grow_branch
from .maps import MapError, compose
from .orbits import OrbitError, find_periodic_orbits
from .perturbations import NudgeSpec, local_nudge, rationalize_flux
from .scenario import run_scenario
from .tangle import WedgeRegion, find_crossings, wedge_entries
from .torus import GeometryError, curve_from_csv, reduce


def _pair(text: str, kind=float) -> tuple:
    try:
        a, b = text.split(",")
        return kind(a), kind(b)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}") from exc


def _int_pair(text: str) -> tuple:
    return _pair(text, int)


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--map", help="map document (JSON)")
    src.add_argument("--hamiltonian", help="Hamiltonian document or builtin name")
    p.add_argument("--steps", type=int, default=256, help="integrator steps for --hamiltonian")
    p.add_argument("--out", help="output directory for artifact files")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, help="override the operation's main tolerance")
    p.add_argument("--workers", type=int, default=1)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="tanglekit", description="Flux, orbits, manifolds and homoclinic tangles of torus maps.")
    ap.add_argument("--version", action="version", version=f"tanglekit {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("flux", parents=[common], help="flux vector and mean rotation")
    p.add_argument("--curve", help="closed curve CSV; report the flux across it as well")

    sub.add_parser("rotation", parents=[common], help="mean rotation vector")

    p = sub.add_parser("orbits", parents=[common], help="periodic orbits of given period and type")
    p.add_argument("--period", type=int, default=1)
    p.add_argument("--type", type=_int_pair, default=(0, 0), metavar="M,N")
    p.add_argument("--grid", type=int, default=16)

    def orbit_args(p, L):
        p.add_argument("--period", type=int, default=1)
        p.add_argument("--type", type=_int_pair, default=(0, 0), metavar="M,N")
        p.add_argument("--grid", type=int, default=16)
        p.add_argument("--orbit-index", type=int, default=0)
        p.add_argument("--Lmax", type=float, default=L)

    p = sub.add_parser("manifold", parents=[common], help="grow one manifold branch")
    orbit_args(p, 50.0)
    p.add_argument("--kind", choices=["u", "s"], default="u")
    p.add_argument("--sign", choices=["+", "-"], default="+")

    p = sub.add_parser("tangle", parents=[common], help="homoclinic crossings of the + branches")
    orbit_args(p, 30.0)
    p.add_argument("--exclude", type=float, default=1e-3)

    p = sub.add_parser("wedge", parents=[common], help="wedge-region entry sequence")
    orbit_args(p, 40.0)
    p.add_argument("--eta", type=float, default=0.05)
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--class", dest="lattice_class", type=_int_pair, metavar="M,N")

    p = sub.add_parser("perturb", help="flux-tuning and local nudge perturbations")
    psub = p.add_subparsers(dest="mode", required=True)
    q = psub.add_parser("rationalize", parents=[common])
    q.add_argument("--denominator", type=int, default=8)
    q = psub.add_parser("nudge", parents=[common])
    q.add_argument("--center", type=_pair, required=True, metavar="X,Y")
    q.add_argument("--target", type=_pair, required=True, metavar="X,Y")
    q.add_argument("--radius", type=float, required=True)
    q.add_argument("--core-fraction", type=float, default=0.5)

    sub.add_parser("hamiltonian", parents=[common], help="zero-flux audit of a stroboscopic map")

    p = sub.add_parser("scenario", parents=[common], help="run a scenario document or bundled scenario")
    p.add_argument("scenario", help="path to a scenario JSON file or a bundled scenario name")
    return ap


def _load(args):
    if args.map:
        return load_map(args.map)
    if args.hamiltonian:
        ref = args.hamiltonian
        return hamiltonian_map(ref, args.steps)
    raise ConfigError("one of --map or --hamiltonian is required")


def _out(args) -> Path | None:
    if not args.out:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(obj) -> None:
    print(dumps(obj, indent=2))


def _orbits(args, f):
    tol = args.tol if args.tol is not None else 1e-11
    return find_periodic_orbits(f, args.period, args.type, args.grid, tol, args.workers)


def _pick(orbits, i):
    if not 0 <= i < len(orbits):
        raise ConfigError(f"orbit index {i} out of range ({len(orbits)} orbits found)")
    return orbits[i]


def cmd_flux(args):
    f = _load(args)
    fv = flux_vector(f, tol=args.tol if args.tol is not None else 1e-6)
    rec = {k: v for k, v in fv.to_dict().items() if k != "representative"}
    if args.curve:
        rec["curve_flux"] = flux_across_curve(f, curve_from_csv(Path(args.curve)))
    _emit(rec)


def cmd_rotation(args):
    rot, n = converged_rotation(_load(args))
    _emit({"rotation": [rot.rx, rot.ry], "grid_n": n})


def cmd_orbits(args):
    _emit([o.to_dict() for o in _orbits(args, _load(args))])


def cmd_manifold(args):
    f = _load(args)
    orbit = _pick(_orbits(args, f), args.orbit_index)
    kind = "unstable" if args.kind == "u" else "stable"
    b = grow_branch(orbit, kind, 1 if args.sign == "+" else -1, GrowthSettings(L_max=args.Lmax), f)
    rec = {"branch": b.summary(), "invariance_residual": branch_invariance_residual(b, f)}
    out = _out(args)
    if out is not None:
        name = f"branch_{args.kind}{'p' if args.sign == '+' else 'm'}.csv"
        export(b, "csv", out / name)
        rec["file"] = name
    _emit(rec)


def cmd_tangle(args):
    f = _load(args)
    orbit = _pick(_orbits(args, f), args.orbit_index)
    st = GrowthSettings(L_max=args.Lmax)
    bu = grow_branch(orbit, "unstable", 1, st, f)
    bs = grow_branch(orbit, "stable", 1, st, f)
    rep = find_crossings(bu, bs, args.exclude, f=f, workers=args.workers)
    out = _out(args)
    if out is not None:
        export(rep, "csv", out / "crossings.csv")
        export({"crossings": rep.crossings, "suspects": rep.suspects}, "json", out / "crossings.json")
    _emit({"crossings": [c.to_dict() for c in rep.crossings], "suspects": [c.to_dict() for c in rep.suspects]})


def cmd_wedge(args):
    f = _load(args)
    orbit = _pick(_orbits(args, f), args.orbit_index)
    bu = grow_branch(orbit, "unstable", 1, GrowthSettings(L_max=args.Lmax), f)
    seq = wedge_entries(bu, WedgeRegion.at_orbit(orbit, args.eta, args.delta), args.lattice_class, f=f)
    out = _out(args)
    if out is not None:
        export(seq, "csv", out / "entries.csv")
    _emit({"entries": [e.to_dict() for e in seq], "diagnostic": seq.diagnostic})


def cmd_perturb(args):
    f = _load(args)
    if args.mode == "rationalize":
        g, fv = rationalize_flux(f, args.denominator, tol=args.tol if args.tol is not None else 1e-6)
    else:
        spec = NudgeSpec(reduce(args.center), reduce(args.target), args.radius, args.core_fraction)
        g = compose(f, local_nudge(spec))
        fv = flux_vector(g)
    before = flux_vector(f, check=False)
    rec = {"mode": args.mode, "flux_before": before.to_dict(), "flux_after": fv.to_dict(), "map": g.to_dict()}
    out = _out(args)
    if out is not None:
        write_json(g.to_dict(), out / "perturbed_map.json")
        write_json({k: v for k, v in rec.items() if k != "map"}, out / "flux_audit.json")
    _emit(rec)


def cmd_hamiltonian(args):
    if not args.hamiltonian:
        raise ConfigError("--hamiltonian is required")
    rows = []
    for n in (args.steps, 2 * args.steps):
        f = hamiltonian_map(args.hamiltonian, n)
        fv = flux_vector(f, check=False)
        rng = np.random.default_rng(args.seed)
        det = np.linalg.det(f.jacobian(rng.random((100, 2))))
        norm = float(np.hypot(circle_distance(fv.phi_a, 0.0), circle_distance(fv.phi_b, 0.0)))
        rows.append({"steps": n, "flux": fv.to_dict(), "norm": norm,
                     "max_det_error": float(np.max(np.abs(det - 1.0)))})
    _emit({"hamiltonian": args.hamiltonian, "audit": rows})


def cmd_scenario(args):
    return run_scenario(args.scenario, out_dir=args.out, workers=args.workers if args.workers > 1 else None,
                        seed=args.seed if args.seed else None)


COMMANDS = {
    "flux": cmd_flux,
    "rotation": cmd_rotation,
    "orbits": cmd_orbits,
    "manifold": cmd_manifold,
    "tangle": cmd_tangle,
    "wedge": cmd_wedge,
    "perturb": cmd_perturb,
    "hamiltonian": cmd_hamiltonian,
    "scenario": cmd_scenario,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        status = COMMANDS[args.command](args)
    except (ConfigError, GeometryError) as exc:
        print(f"tanglekit: configuration error: {exc}", file=sys.stderr)
        return 2
    except (FluxError, OrbitError, ManifoldError, MapError, RuntimeError, ValueError, IndexError) as exc:
        print(f"tanglekit: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"tanglekit: {exc}", file=sys.stderr)
        return 1
    return int(status or 0)


if __name__ == "__main__":
    sys.exit(main())
