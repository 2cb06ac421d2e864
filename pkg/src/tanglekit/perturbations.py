"""Compactly supported area-preserving perturbations.

* ``flux_tuner``: a shear inside a tube around one homology generator whose
  displacement depends only on the coordinate across the tube.  It moves the
  flux across the dual generator by ``epsilon * integral(beta)``.
* ``local_nudge``: the time-1 map of an autonomous Hamiltonian supported in a
  disc, whose field is a constant vector on a flat core.  It carries the
  disc centre onto a prescribed nearby target and is the identity outside
  the disc.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import ClassVar

import numpy as np
from scipy.integrate import quad

from .flux import FluxVector, circle_distance, flux_vector
from .hamiltonian import integrate_system
from .maps import LiftedMap, _as_points, _eye_like, compose, register
from .torus import TorusPoint, reduce

FLUX_TARGET_TOL = 1e-6


def _centered(s):
    """Representative of s mod 1 in [-1/2, 1/2)."""
    return np.mod(s + 0.5, 1.0) - 0.5


@dataclass(frozen=True)
class BumpProfile:
    """beta(t) = exp(1 - 1/(1 - (t/delta)^2)) on (-delta, delta), zero elsewhere."""

    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("bump half-width must be positive")

    def _parts(self, t):
        t = np.asarray(t, dtype=float)
        u = t / self.delta
        inside = np.abs(u) < 1.0
        w = np.where(inside, 1.0 - u * u, 1.0)
        val = np.where(inside, np.exp(1.0 - 1.0 / w), 0.0)
        return u, w, inside, val

    def __call__(self, t):
        return self._parts(t)[3]

    def deriv(self, t):
        u, w, inside, val = self._parts(t)
        return np.where(inside, -val * 2.0 * u / (self.delta * w * w), 0.0)

    @cached_property
    def integral(self) -> float:
        # the substitution t = delta * u keeps the tolerance independent of delta
        val, _ = quad(lambda u: math.exp(1.0 - 1.0 / (1.0 - u * u)), -1.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
        return self.delta * val


@dataclass(frozen=True)
class TunerSpec:
    generator: str  # "a" or "b": the loop the tube runs along
    epsilon: float
    tube: BumpProfile
    tube_center: float = 0.0

    def __post_init__(self):
        if self.generator not in ("a", "b"):
            raise ValueError("generator must be 'a' or 'b'")
        if not 2.0 * self.tube.delta < 1.0:
            raise ValueError("tube too wide: need 2*delta < 1")


@dataclass(frozen=True)
class FluxTuner(LiftedMap):
    """Shear along a generator inside its tube.

    generator b (vertical tube around x = c): (x, y) -> (x, y + eps*beta(x - c)).
    generator a (horizontal tube around y = c): (x, y) -> (x + eps*beta(y - c), y).
    """

    spec: TunerSpec
    type_name: ClassVar[str] = "flux_tuner"

    def _axes(self):
        # (coordinate across the tube, coordinate being sheared)
        return (0, 1) if self.spec.generator == "b" else (1, 0)

    def eval_jac(self, z):
        z = _as_points(z)
        across, along = self._axes()
        s = _centered(z[..., across] - self.spec.tube_center)
        beta = self.spec.tube
        inside = np.abs(s) < beta.delta
        out = np.array(z, dtype=float)
        # np.where keeps points outside the tube bitwise unchanged
        out[..., along] = np.where(inside, z[..., along] + self.spec.epsilon * beta(s), z[..., along])
        J = _eye_like(z)
        J[..., along, across] = np.where(inside, self.spec.epsilon * beta.deriv(s), 0.0)
        return out, J

    def flux_shift(self) -> float:
        return self.spec.epsilon * self.spec.tube.integral

    def to_dict(self):
        s = self.spec
        return {
            "type": self.type_name,
            "generator": s.generator,
            "epsilon": s.epsilon,
            "delta": s.tube.delta,
            "tube_center": s.tube_center,
        }


def flux_tuner(spec: TunerSpec) -> LiftedMap:
    return FluxTuner(spec)


@register("flux_tuner")
def _flux_tuner_from(d):
    return FluxTuner(
        TunerSpec(d["generator"], float(d["epsilon"]), BumpProfile(float(d["delta"])), float(d.get("tube_center", 0.0)))
    )


def nearest_rational(value: float, Q: int) -> Fraction:
    """Closest p/q in [0, 1) with q <= Q on the circle; ties go to the smaller denominator, then value."""
    best = None
    for q in range(1, Q + 1):
        for p in range(q):
            fr = Fraction(p, q)
            if fr.denominator != q:
                continue
            key = (float(circle_distance(value, float(fr))), q, fr)
            if best is None or key < best:
                best = key
    return best[2]


def _signed_gap(target: float, value: float) -> float:
    return float(_centered(target - value))


def rationalize_flux(
    f: LiftedMap,
    Q: int,
    delta: float = 0.1,
    centers: tuple[float, float] = (0.0, 0.0),
    tol: float = FLUX_TARGET_TOL,
    max_iter: int = 20,
) -> tuple[LiftedMap, FluxVector]:
    """Compose f with tuners on both generators so each flux component is a rational p/q, q <= Q.

    The epsilon of each tuner starts at the additive prediction
    (target - flux) / integral(beta) and is corrected, using the same slope,
    from the re-measured flux of the composite.
    """
    if Q < 1:
        raise ValueError("denominator bound must be >= 1")
    base = flux_vector(f)
    targets = (nearest_rational(base.phi_a, Q), nearest_rational(base.phi_b, Q))
    gaps = (_signed_gap(float(targets[0]), base.phi_a), _signed_gap(float(targets[1]), base.phi_b))
    if gaps[0] == 0.0 and gaps[1] == 0.0:
        return f, base
    bump = BumpProfile(delta)
    ib = bump.integral

    def build(eps_a, eps_b):
        g = f
        # the b-tube tuner moves phi_a, the a-tube tuner moves phi_b
        if eps_a != 0.0:
            g = compose(g, FluxTuner(TunerSpec("b", eps_a, bump, centers[0])))
        if eps_b != 0.0:
            g = compose(g, FluxTuner(TunerSpec("a", eps_b, bump, centers[1])))
        return g

    eps = np.array(gaps) / ib
    g = build(*eps)
    fv = flux_vector(g)
    err = np.array([_signed_gap(float(targets[0]), fv.phi_a), _signed_gap(float(targets[1]), fv.phi_b)])
    for _ in range(max_iter):
        if np.max(np.abs(err)) <= 1e-3 * tol:
            break
        # the response d(flux)/d(eps) is integral(beta) for each component
        eps = eps + err / ib
        g = build(*eps)
        fv = flux_vector(g)
        err = np.array([_signed_gap(float(targets[0]), fv.phi_a), _signed_gap(float(targets[1]), fv.phi_b)])
    if np.max(np.abs(err)) > tol:
        raise RuntimeError(
            f"rationalized flux ({fv.phi_a:.12g}, {fv.phi_b:.12g}) misses target "
            f"({targets[0]}, {targets[1]}) by {np.max(np.abs(err)):.3e}"
        )
    return g, fv


# -- local nudge -------------------------------------------------------------


def _psi(t):
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)


def _psi_d(t):
    tt = np.where(t > 0, t, 1.0)
    p = _psi(t)
    return p / tt**2, p * (1.0 / tt**4 - 2.0 / tt**3)


def _smoothstep_down(u):
    """C-infinity function equal to 1 for u <= 0, 0 for u >= 1; returns value and two derivatives."""
    a, b = _psi(1.0 - u), _psi(u)
    da1, da2 = _psi_d(1.0 - u)
    db1, db2 = _psi_d(u)
    a1, a2 = -da1, da2
    b1, b2 = db1, db2
    D = a + b
    S = a / D
    N = a1 * b - a * b1
    S1 = N / D**2
    N1 = a2 * b - a * b2
    S2 = (N1 * D - 2.0 * N * (a1 + b1)) / D**3
    return S, S1, S2


@dataclass(frozen=True)
class NudgeSpec:
    center: TorusPoint
    target: TorusPoint
    delta: float
    core_fraction: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.core_fraction < 1.0:
            raise ValueError("core_fraction must lie in (0, 1)")
        if not 0.0 < self.delta < 0.5:
            raise ValueError("nudge radius must lie in (0, 1/2)")

    @property
    def displacement(self) -> np.ndarray:
        return _centered(np.asarray(self.target, float) - np.asarray(self.center, float))


class _NudgeField:
    """Autonomous field of H = chi(|d|^2) * (v_x d_y - v_y d_x), d the minimal-image offset from the centre."""

    def __init__(self, spec: NudgeSpec):
        self.c = np.asarray(spec.center, float)
        self.v = spec.displacement
        self.r2 = (spec.core_fraction * spec.delta) ** 2
        self.R2 = spec.delta**2

    def field(self, z, t, need_jac=False):
        d = _centered(z - self.c)
        rho = np.sum(d * d, axis=-1)
        span = self.R2 - self.r2
        u = (rho - self.r2) / span
        chi, c1, c2 = _smoothstep_down(np.clip(u, -1.0, 2.0))
        c1, c2 = c1 / span, c2 / span**2
        vx, vy = self.v
        Lval = vx * d[..., 1] - vy * d[..., 0]
        g = np.array([-vy, vx])
        grad = 2.0 * (Lval * c1)[..., None] * d + chi[..., None] * g
        out = np.stack([grad[..., 1], -grad[..., 0]], axis=-1)
        if not need_jac:
            return out, None
        dg = d[..., :, None] * g + g[:, None] * d[..., None, :]
        dd = d[..., :, None] * d[..., None, :]
        Hs = (4.0 * Lval * c2)[..., None, None] * dd + 2.0 * c1[..., None, None] * (
            Lval[..., None, None] * np.eye(2) + dg
        )
        A = np.empty_like(Hs)
        A[..., 0, 0] = Hs[..., 0, 1]
        A[..., 0, 1] = Hs[..., 1, 1]
        A[..., 1, 0] = -Hs[..., 0, 0]
        A[..., 1, 1] = -Hs[..., 0, 1]
        return out, A


@dataclass(frozen=True)
class LocalNudge(LiftedMap):
    spec: NudgeSpec
    steps: int = 64
    type_name: ClassVar[str] = "nudge"

    @property
    def integrated(self):
        return True

    def _inside(self, z):
        d = _centered(z - np.asarray(self.spec.center, float))
        return np.sum(d * d, axis=-1) < self.spec.delta**2

    def eval_jac(self, z):
        z = _as_points(z)
        out = np.array(z, dtype=float)
        J = _eye_like(z)
        if not np.any(self.spec.displacement):
            return out, J
        inside = self._inside(z)
        if np.any(inside):
            zi, Ji = integrate_system(_NudgeField(self.spec), z[inside], 0.0, 1.0, self.steps, need_jac=True)
            out[inside] = zi
            J[inside] = Ji
        return out, J

    def evaluate(self, z):
        z = _as_points(z)
        out = np.array(z, dtype=float)
        if not np.any(self.spec.displacement):
            return out
        inside = self._inside(z)
        if np.any(inside):
            out[inside] = integrate_system(_NudgeField(self.spec), z[inside], 0.0, 1.0, self.steps)[0]
        return out

    def to_dict(self):
        s = self.spec
        return {
            "type": self.type_name,
            "center": list(s.center),
            "target": list(s.target),
            "delta": s.delta,
            "core_fraction": s.core_fraction,
            "steps": self.steps,
        }


def local_nudge(spec: NudgeSpec, integrator_steps: int = 64) -> LiftedMap:
    """Area-preserving map supported in B_delta(center) sending center to target."""
    v = spec.displacement
    # the straight path of the centre must stay inside the flat core
    if math.hypot(*v) >= spec.core_fraction * spec.delta:
        raise ValueError(
            f"displacement too large for the core: |v| = {math.hypot(*v):.3g} "
            f">= {spec.core_fraction * spec.delta:.3g}"
        )
    if integrator_steps < 1:
        raise ValueError("integrator_steps must be >= 1")
    return LocalNudge(spec, int(integrator_steps))


@register("nudge")
def _nudge_from(d):
    spec = NudgeSpec(
        reduce(d["center"]), reduce(d["target"]), float(d["delta"]), float(d.get("core_fraction", 0.5))
    )
    return local_nudge(spec, int(d.get("steps", 64)))
