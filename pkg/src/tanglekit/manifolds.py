"""Stable and unstable branches of hyperbolic periodic orbits as adaptive polylines.

A branch is parametrised by tau >= 0.  With g the step map (f^k for
unstable branches, f^-k for stable ones) and lam > 1 its expansion rate
along the chosen eigenvector e,

    point(tau) = g^n(p + sign * d0 * lam**s * e),    tau = n + s, 0 <= s < 1,

so generation n is the image of the seed segment under g^n.  New vertices
are always produced from the seed segment and then mapped, which keeps
them on the invariant curve up to the seeding error.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .maps import LiftedMap, inverse, iterate
from .orbits import PeriodicOrbit

MAX_TAU_DEPTH = 50  # bisection depth limit for vertex insertion


class ManifoldError(RuntimeError):
    pass


class VacuousResidualWarning(UserWarning):
    """The branch is too short to leave anything after excluding the last fundamental domain."""


@dataclass(frozen=True)
class GrowthSettings:
    d0: float = 1e-7
    max_spacing: float = 1e-3
    max_angle: float = 0.3
    L_max: float = 50.0
    N_max: int = 2_000_000

    def __post_init__(self):
        for name in ("d0", "max_spacing", "max_angle", "L_max", "N_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class ManifoldBranch:
    orbit: PeriodicOrbit
    kind: str  # "stable" | "unstable"
    sign: int  # +1 | -1
    polyline: np.ndarray
    arclen: np.ndarray
    tau: np.ndarray  # tau[0] = -inf marks the periodic point itself
    settings: GrowthSettings
    step_power: int  # g = f^step_power (unstable) or f^-step_power (stable)
    rate: float  # expansion rate of g along the branch
    direction: tuple
    truncated: bool = False
    metadata: dict = field(default_factory=dict)

    @property
    def length(self) -> float:
        return float(self.arclen[-1])

    def step_map(self, f: LiftedMap) -> LiftedMap:
        return branch_step_map(f, self.kind, self.step_power)

    def points_at(self, tau, g: LiftedMap) -> np.ndarray:
        return _points_at(np.asarray(tau, float), self.orbit.base_array(), self.sign, self.settings.d0,
                          self.rate, np.asarray(self.direction), g)

    def to_csv(self, path=None) -> str:
        o = self.orbit
        lines = [
            f"# orbit base={float(o.base.x)!r},{float(o.base.y)!r} period={o.period} "
            f"type={o.type.m},{o.type.n} kind {self.kind} sign {'+' if self.sign > 0 else '-'}",
            "X,Y,arclen",
        ]
        lines += [f"{x!r},{y!r},{s!r}" for (x, y), s in zip(self.polyline.tolist(), self.arclen.tolist())]
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "sign": self.sign,
            "vertices": int(len(self.polyline)),
            "length": self.length,
            "step_power": self.step_power,
            "rate": self.rate,
            "truncated": self.truncated,
            **self.metadata,
        }


def branch_step_map(f: LiftedMap, kind: str, power: int) -> LiftedMap:
    if kind == "unstable":
        return iterate(f, power)
    return iterate(inverse(f), power)


def _points_at(tau, base, sign, d0, lam, e, g):
    tau = np.atleast_1d(tau)
    n = np.floor(tau).astype(int)
    s = tau - n
    out = base + sign * d0 * (lam**s)[:, None] * e
    for level in range(1, int(n.max(initial=0)) + 1):
        sel = n >= level
        out[sel] = g.evaluate(out[sel])
    return out


def _turning(P: np.ndarray) -> np.ndarray:
    """Turning angle at interior vertices of P (zero where a segment is degenerate)."""
    d = np.diff(P, axis=0)
    a, b = d[:-1], d[1:]
    cr = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    dt = np.sum(a * b, axis=1)
    return np.abs(np.arctan2(cr, dt))


def grow_branch(orbit: PeriodicOrbit, kind: str, sign: int, settings: GrowthSettings, f: LiftedMap) -> ManifoldBranch:
    """Grow one branch by mapping whole fundamental segments and refining in tau."""
    if not orbit.hyperbolic:
        raise ManifoldError(f"orbit at {tuple(orbit.base)} is {orbit.stability}, not hyperbolic")
    if kind not in ("stable", "unstable"):
        raise ValueError("kind must be 'stable' or 'unstable'")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    lu, _ = orbit.multipliers
    power = orbit.period
    lam = abs(lu)
    meta = {}
    if lu < 0:
        # negative multipliers flip the branch sides; use the square so each branch is invariant
        power *= 2
        lam = lu * lu
        meta["period_squared"] = True
    e = np.array(orbit.eigenframe[0 if kind == "unstable" else 1], float)
    base = orbit.base_array()
    g = branch_step_map(f, kind, power)
    st = settings

    def pts(tau):
        return _points_at(tau, base, sign, st.d0, lam, e, g)

    def refine(tau, P, prev):
        """Insert tau-midpoints until spacing and turning bounds hold; prev is the vertex before P[0]."""
        for _ in range(MAX_TAU_DEPTH):
            full = np.vstack([prev[None, :], P])
            seg = np.linalg.norm(np.diff(P, axis=0), axis=1)
            bad = seg > st.max_spacing
            turn = _turning(full)  # turn[i] is at vertex P[i]
            sharp = np.flatnonzero(turn > st.max_angle)
            # a sharp vertex refines both neighbouring segments inside this generation
            bad[sharp[sharp < len(bad)]] = True
            left = sharp - 1
            bad[left[left >= 0]] = True
            idx = np.flatnonzero(bad)
            if idx.size == 0:
                return tau, P, False
            gaps = tau[idx + 1] - tau[idx]
            idx = idx[gaps > 4 * np.spacing(np.abs(tau[idx]) + 1.0)]
            if idx.size == 0:
                return tau, P, True
            tm = 0.5 * (tau[idx] + tau[idx + 1])
            Pm = pts(tm)
            tau = np.insert(tau, idx + 1, tm)
            P = np.insert(P, idx + 1, Pm, axis=0)
        return tau, P, True

    # generation 0: the seed segment tau in [0, 1]
    tau0 = np.array([0.0, 1.0])
    tau_g, P_g, stuck = refine(tau0, pts(tau0), base)
    taus = [np.array([-np.inf]), tau_g]
    polys = [base[None, :], P_g]
    total = 1 + len(P_g)
    length = st.d0 + float(np.sum(np.linalg.norm(np.diff(P_g, axis=0), axis=1)))
    truncated = False
    unresolved = bool(stuck)
    while length < st.L_max:
        # next generation: images of the current one, dropping the shared first vertex
        tau_n = tau_g[1:] + 1.0
        P_n = g.evaluate(P_g[1:])
        prev = P_g[-2]
        tau_n = np.concatenate([[tau_g[-1]], tau_n])
        P_n = np.vstack([P_g[-1:], P_n])
        tau_n, P_n, stuck = refine(tau_n, P_n, prev)
        unresolved |= bool(stuck)
        tau_g, P_g = tau_n, P_n
        taus.append(tau_n[1:])
        polys.append(P_n[1:])
        total += len(P_n) - 1
        length += float(np.sum(np.linalg.norm(np.diff(P_n, axis=0), axis=1)))
        if total >= st.N_max:
            truncated = True
            break
    P = np.vstack(polys)
    tau = np.concatenate(taus)
    arclen = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(P, axis=0), axis=1))])
    # cut at the first vertex reaching L_max (or N_max)
    stop = int(np.searchsorted(arclen, st.L_max)) + 1
    stop = min(stop, len(P), st.N_max)
    if truncated and arclen[stop - 1] < st.L_max:
        meta["truncated_at_length"] = float(arclen[stop - 1])
    if unresolved:
        meta["unresolved_refinement"] = True
    return ManifoldBranch(
        orbit, kind, sign, P[:stop].copy(), arclen[:stop].copy(), tau[:stop].copy(), st, power, float(lam),
        tuple(map(float, e)), truncated, meta,
    )


def _point_segment_distance(q, A, B):
    d = B - A
    dd = np.sum(d * d, axis=-1)
    t = np.where(dd > 0, np.sum((q - A) * d, axis=-1) / np.where(dd > 0, dd, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    return np.linalg.norm(A + t[..., None] * d - q, axis=-1)


def branch_invariance_residual(b: ManifoldBranch, f: LiftedMap, samples: int = 200) -> float:
    """Max distance from g(point(tau)) to the polyline over arc-length samples.

    Samples whose image lies beyond the computed branch (the outermost
    fundamental domain) are excluded; tau is interpolated linearly in
    arc length and the sample is recomputed exactly on the curve.
    """
    tau = b.tau
    tau_end = tau[-1]
    usable = np.flatnonzero(np.isfinite(tau) & (tau <= tau_end - 1.0))
    if usable.size < 2:
        warnings.warn("branch shorter than one fundamental domain: residual is vacuous", VacuousResidualWarning)
        return 0.0
    hi = usable[-1]
    lo = usable[0]
    s = np.linspace(b.arclen[lo], b.arclen[hi], samples)
    ts = np.interp(s, b.arclen[lo : hi + 1], tau[lo : hi + 1])
    g = b.step_map(f)
    img = g.evaluate(b.points_at(ts, g))
    # locate the image by its parameter tau + 1, then measure against nearby segments
    j = np.searchsorted(tau, ts + 1.0)
    best = np.full(len(ts), np.inf)
    P = b.polyline
    for off in range(-3, 3):
        i = np.clip(j + off, 0, len(P) - 2)
        best = np.minimum(best, _point_segment_distance(img, P[i], P[i + 1]))
    return float(np.max(best))


def grow_all_branches(orbit: PeriodicOrbit, settings: GrowthSettings, f: LiftedMap) -> dict:
    """The four branches keyed ('unstable', +1), ('unstable', -1), ('stable', +1), ('stable', -1)."""
    return {(kind, sign): grow_branch(orbit, kind, sign, settings, f)
            for kind in ("unstable", "stable") for sign in (1, -1)}
