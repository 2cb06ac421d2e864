"""Periodic orbits of prescribed period and lattice type.

A period-k orbit of type m solves F^k(z) = z + m in the lift.  Roots are
found by damped Newton from a regular seed grid, merged modulo Z^2 and
modulo the orbit relation, and classified from the trace of DF^k.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .maps import LiftedMap, iterate
from .torus import LatticeVector, TorusPoint, torus_distance

RESIDUAL_TOL = 1e-11
DEDUP_RADIUS = 1e-7
TRACE_BAND = 1e-8
MAX_NEWTON = 60


class OrbitError(RuntimeError):
    pass


@dataclass(frozen=True)
class PeriodicOrbit:
    base: TorusPoint
    period: int
    type: LatticeVector
    residual: float = math.nan
    multipliers: tuple | None = None
    eigenframe: tuple | None = None  # (e_u, e_s) for hyperbolic orbits
    stability: str | None = None  # hyperbolic | elliptic | parabolic-marginal
    trace: float = math.nan

    @property
    def hyperbolic(self) -> bool:
        return self.stability == "hyperbolic"

    @property
    def lambda_u(self) -> float:
        return float(self.multipliers[0].real)

    def base_array(self) -> np.ndarray:
        return np.array(self.base, dtype=float)

    def to_dict(self) -> dict:
        mult = None
        if self.multipliers is not None:
            mult = [[float(np.real(c)), float(np.imag(c))] for c in self.multipliers]
        frame = None if self.eigenframe is None else [list(map(float, v)) for v in self.eigenframe]
        return {
            "base": [float(self.base.x), float(self.base.y)],
            "period": self.period,
            "type": [int(self.type.m), int(self.type.n)],
            "residual": self.residual,
            "trace": self.trace,
            "multipliers": mult,
            "eigenframe": frame,
            "class": self.stability,
        }


def _canonical(z: np.ndarray) -> np.ndarray:
    r = np.mod(z, 1.0)
    # values a hair below 1 are the same torus point as 0
    return np.where(r > 1.0 - 1e-13, 0.0, r) + 0.0


def _root_map(fk: LiftedMap, m: np.ndarray):
    def G(z):
        return fk.evaluate(z) - z - m

    def G_jac(z):
        w, J = fk.eval_jac(z)
        return w - z - m, J - np.eye(2)

    return G, G_jac


def _newton(fk: LiftedMap, Z: np.ndarray, m: np.ndarray, tol: float, max_iter: int = MAX_NEWTON):
    """Damped Newton with Armijo backtracking on |G|^2; returns (roots, residuals, converged)."""
    G, G_jac = _root_map(fk, m)
    Z = np.array(Z, dtype=float)
    r = G(Z)
    e = np.linalg.norm(r, axis=1)
    target = 1e-2 * tol
    active = e > target
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        r_i, D = G_jac(Z[idx])
        det = np.linalg.det(D)
        scale = np.max(np.abs(D), axis=(1, 2)) ** 2 + 1e-300
        regular = np.abs(det) > 1e-12 * scale
        step = np.zeros_like(r_i)
        if np.any(regular):
            step[regular] = np.linalg.solve(D[regular], -r_i[regular][..., None])[..., 0]
        if np.any(~regular):
            # least-squares step for (near) singular root-map Jacobians
            step[~regular] = -(np.linalg.pinv(D[~regular]) @ r_i[~regular][..., None])[..., 0]
        lam = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        phi0 = e[idx] ** 2
        for _half in range(30):
            sub = np.flatnonzero(pending)
            if sub.size == 0:
                break
            trial = Z[idx[sub]] + lam[sub, None] * step[sub]
            rt = G(trial)
            et = np.linalg.norm(rt, axis=1)
            ok = et**2 <= (1.0 - 2e-4 * lam[sub]) * phi0[sub]
            good = sub[ok]
            Z[idx[good]], r[idx[good]], e[idx[good]] = trial[ok], rt[ok], et[ok]
            pending[good] = False
            lam[sub[~ok]] *= 0.5
        still = e[idx] > target
        active[idx] = still & ~pending
    return Z, e, e < tol


def _multipliers(M: np.ndarray):
    tr = float(np.trace(M))
    det = float(np.linalg.det(M))
    disc = tr * tr - 4.0 * det
    if disc >= 0:
        s = math.sqrt(disc)
        # stable root form avoids cancellation for the small multiplier
        big = 0.5 * (tr + math.copysign(s, tr)) if tr != 0 else 0.5 * s
        small = det / big if big != 0 else 0.5 * (tr - s)
        return tr, (big, small)
    s = math.sqrt(-disc)
    return tr, (complex(0.5 * tr, 0.5 * s), complex(0.5 * tr, -0.5 * s))


def _eigvec(M: np.ndarray, lam: float) -> np.ndarray:
    c1 = np.array([M[0, 1], lam - M[0, 0]])
    c2 = np.array([lam - M[1, 1], M[1, 0]])
    v = c1 if np.linalg.norm(c1) >= np.linalg.norm(c2) else c2
    v = v / np.linalg.norm(v)
    lead = v[0] if abs(v[0]) > 1e-14 else v[1]
    v = -v if lead < 0 else v
    return np.array([float(v[0]), float(v[1])])


def classify(orbit: PeriodicOrbit, f: LiftedMap) -> PeriodicOrbit:
    """Fill multipliers, eigenframe and stability class from DF^k along the orbit."""
    fk = iterate(f, orbit.period)
    z = orbit.base_array()
    w, M = fk.eval_jac(z)
    residual = float(np.linalg.norm(w - z - np.array(orbit.type, dtype=float)))
    tr, mult = _multipliers(M)
    if abs(abs(tr) - 2.0) <= TRACE_BAND:
        return replace(orbit, residual=residual, multipliers=mult, eigenframe=None,
                       stability="parabolic-marginal", trace=tr)
    if abs(tr) < 2.0:
        return replace(orbit, residual=residual, multipliers=mult, eigenframe=None,
                       stability="elliptic", trace=tr)
    lu, ls = mult
    frame = (tuple(map(float, _eigvec(M, lu))), tuple(map(float, _eigvec(M, ls))))
    return replace(orbit, residual=residual, multipliers=(lu, ls), eigenframe=frame,
                   stability="hyperbolic", trace=tr)


def _solve_chunks(fk, seeds, m, tol, workers):
    if workers <= 1 or len(seeds) < 2 * workers:
        return _newton(fk, seeds, m, tol)
    chunks = np.array_split(seeds, workers)
    with ThreadPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(lambda c: _newton(fk, c, m, tol), chunks))
    return tuple(np.concatenate(p) for p in zip(*parts))


def find_periodic_orbits(
    f: LiftedMap,
    k: int,
    m=(0, 0),
    grid_n: int = 16,
    tol: float = RESIDUAL_TOL,
    workers: int = 1,
) -> list[PeriodicOrbit]:
    """All period-k orbits of type m reachable from a grid_n x grid_n seed grid, classified and sorted."""
    if k < 1:
        raise ValueError("period must be >= 1")
    if grid_n < 1:
        raise ValueError("grid_n must be >= 1")
    m_vec = np.array(m, dtype=float)
    fk = iterate(f, k)
    s = np.arange(grid_n) / grid_n
    seeds = np.stack(np.meshgrid(s, s, indexing="ij"), axis=-1).reshape(-1, 2)
    G, _ = _root_map(fk, m_vec)
    if np.all(np.linalg.norm(G(seeds), axis=1) < tol):
        raise OrbitError("degenerate: identity-like root map")
    Z, e, ok = _solve_chunks(fk, seeds, m_vec, tol, workers)
    roots = _canonical(Z[ok])
    if roots.size == 0:
        return []
    roots = roots[np.lexsort((roots[:, 1], roots[:, 0]))]
    reps: list[np.ndarray] = []
    for z in roots:
        if not reps or np.min(torus_distance(np.array(reps), z)) >= DEDUP_RADIUS:
            reps.append(z)
    # merge points lying on a common orbit
    orbits: list[np.ndarray] = []
    for z in reps:
        if any(np.min(torus_distance(pts, z)) < DEDUP_RADIUS for pts in orbits):
            continue
        pts = [z]
        w = z
        for _ in range(k - 1):
            w = f.evaluate(w)
            pts.append(w)
        orbits.append(_canonical(np.array(pts)))
    found = []
    mv = LatticeVector(int(m[0]), int(m[1]))
    for pts in orbits:
        key = np.mod(np.round(pts, 9), 1.0)
        base = pts[np.lexsort((key[:, 1], key[:, 0]))[0]]
        zb, eb, okb = _newton(fk, base[None, :], m_vec, tol)
        zb = _canonical(zb[0]) if okb[0] else base
        orbit = PeriodicOrbit(TorusPoint(float(zb[0]), float(zb[1])), k, mv)
        found.append(classify(orbit, f))
    # rounding keeps the order stable against last-digit differences between roots
    found.sort(key=lambda o: (round(o.base.x, 9) % 1.0, round(o.base.y, 9) % 1.0))
    return found
