"""Time-periodic Hamiltonians on T^2 x S^1 and their time-1 maps.

Sign convention (fixed once): x' = dH/dy, y' = -dH/dx.

The flow is integrated with the implicit midpoint rule.  The Jacobian of
one step is the exact derivative of the discrete map,

    (I - h A/2) dz1 = (I + h A/2) dz0,   A = D(J grad H) at the midpoint,

a Cayley transform of a trace-free matrix, so its determinant is 1 up to
roundoff and the solver tolerance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar

import numba
import numpy as np

from .maps import LiftedMap, MapError, TwistProfile, _as_points, _eye_like, register

TWO_PI = 2.0 * math.pi
DEFAULT_STEPS = 256
INNER_TOL = 1e-13


def _factor(kind: str, k: int, s: np.ndarray):
    """Value and first two derivatives of cos/sin(2 pi k s) or the constant 1."""
    if kind == "one" or k == 0:
        one = np.ones_like(s)
        zero = np.zeros_like(s)
        return one, zero, zero
    w = TWO_PI * k
    c, sn = np.cos(w * s), np.sin(w * s)
    if kind == "cos":
        return c, -w * sn, -w * w * c
    if kind == "sin":
        return sn, w * c, -w * w * sn
    raise ValueError(f"unknown trig factor {kind!r}")


@dataclass(frozen=True)
class HamiltonianTerm:
    """coeff * X(2 pi kx x) * Y(2 pi ky y) * T(t) with X, Y in {cos, sin, 1}."""

    coeff: float
    x: tuple = ("one", 0)
    y: tuple = ("one", 0)
    t: TwistProfile = field(default_factory=lambda: TwistProfile(1.0))

    def __post_init__(self):
        for part in (self.x, self.y):
            if part[0] not in ("cos", "sin", "one") or int(part[1]) < 0:
                raise ValueError(f"bad spatial factor {part!r}")
        object.__setattr__(self, "x", (str(self.x[0]), int(self.x[1])))
        object.__setattr__(self, "y", (str(self.y[0]), int(self.y[1])))

    def to_dict(self):
        return {"coeff": self.coeff, "x": list(self.x), "y": list(self.y), "t": self.t.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(
            float(d["coeff"]),
            tuple(d.get("x", ("one", 0))),
            tuple(d.get("y", ("one", 0))),
            TwistProfile.from_dict(d.get("t", {"mean": 1.0})),
        )


@dataclass(frozen=True)
class HamiltonianSpec:
    terms: tuple = ()
    period: float = 1.0

    def __post_init__(self):
        if self.period != 1.0:
            raise ValueError("only period-1 Hamiltonians are supported")
        object.__setattr__(self, "terms", tuple(self.terms))

    def value(self, z, t):
        z = _as_points(z)
        out = np.zeros(z.shape[:-1])
        for term in self.terms:
            X = _factor(*term.x, z[..., 0])[0]
            Y = _factor(*term.y, z[..., 1])[0]
            out = out + term.coeff * X * Y * term.t(t)
        return out

    def derivatives(self, z, t):
        """(Hx, Hy, Hxx, Hxy, Hyy) at points z and scalar time t."""
        shape = z.shape[:-1]
        Hx, Hy = np.zeros(shape), np.zeros(shape)
        Hxx, Hxy, Hyy = np.zeros(shape), np.zeros(shape), np.zeros(shape)
        for term in self.terms:
            X, dX, ddX = _factor(*term.x, z[..., 0])
            Y, dY, ddY = _factor(*term.y, z[..., 1])
            c = term.coeff * float(term.t(t))
            if c == 0.0:
                continue
            Hx += c * dX * Y
            Hy += c * X * dY
            Hxx += c * ddX * Y
            Hxy += c * dX * dY
            Hyy += c * X * ddY
        return Hx, Hy, Hxx, Hxy, Hyy

    def field(self, z, t, need_jac: bool = False):
        Hx, Hy, Hxx, Hxy, Hyy = self.derivatives(z, t)
        g = np.stack([Hy, -Hx], axis=-1)
        if not need_jac:
            return g, None
        A = np.empty(z.shape[:-1] + (2, 2))
        A[..., 0, 0] = Hxy
        A[..., 0, 1] = Hyy
        A[..., 1, 0] = -Hxx
        A[..., 1, 1] = -Hxy
        return g, A

    def to_dict(self):
        return {"terms": [t.to_dict() for t in self.terms], "period": self.period}

    @classmethod
    def from_dict(cls, d):
        if isinstance(d, list):
            d = {"terms": d}
        if "builtin" in d:
            return BUILTIN_HAMILTONIANS[d["builtin"]]
        return cls(tuple(HamiltonianTerm.from_dict(t) for t in d.get("terms", ())))


def _sin_t(amp: float = 1.0) -> TwistProfile:
    return TwistProfile(0.0, ((1, 0.0, amp),))


def _cos_t(amp: float = 1.0, mean: float = 0.0) -> TwistProfile:
    return TwistProfile(mean, ((1, amp, 0.0),))


BUILTIN_HAMILTONIANS: dict[str, HamiltonianSpec] = {
    "zero": HamiltonianSpec(()),
    "shear_cos": HamiltonianSpec((HamiltonianTerm(1 / TWO_PI, y=("cos", 1)),)),
    "modulated_cos": HamiltonianSpec((HamiltonianTerm(1 / TWO_PI, x=("cos", 1), t=_sin_t()),)),
    "cos_product": HamiltonianSpec(
        (HamiltonianTerm(1.0 / TWO_PI, x=("cos", 1), y=("cos", 1), t=_sin_t()),)
    ),
    "driven_pendulum": HamiltonianSpec(
        (
            HamiltonianTerm(0.5 / TWO_PI, y=("cos", 1)),
            HamiltonianTerm(0.3 / TWO_PI, x=("cos", 1), t=_cos_t(1.0, 1.0)),
        )
    ),
    "mixed_modes": HamiltonianSpec(
        (
            HamiltonianTerm(0.4 / TWO_PI, x=("sin", 1), y=("cos", 2), t=_cos_t()),
            HamiltonianTerm(0.3 / TWO_PI, y=("sin", 1), t=_sin_t()),
            HamiltonianTerm(0.2 / TWO_PI, x=("cos", 2), y=("sin", 1)),
        )
    ),
}


def _midpoint_step(system, z, t_mid, h, need_jac):
    """One implicit-midpoint step for all points; returns (z1, step Jacobian or None)."""
    g0, _ = system.field(z, t_mid)
    # explicit midpoint predictor
    g1, _ = system.field(z + 0.5 * h * g0, t_mid)
    z1 = z + h * g1
    done = False
    for _ in range(60):
        g, _ = system.field(0.5 * (z + z1), t_mid)
        znew = z + h * g
        delta = np.max(np.abs(znew - z1), initial=0.0)
        z1 = znew
        if delta <= INNER_TOL:
            done = True
            break
    if not done:
        z1 = _newton_polish(system, z, z1, t_mid, h)
    if not need_jac:
        return z1, None
    _, A = system.field(0.5 * (z + z1), t_mid, need_jac=True)
    I = _eye_like(z)
    M = np.linalg.solve(I - 0.5 * h * A, I + 0.5 * h * A)
    return z1, M


def _newton_polish(system, z, z1, t_mid, h):
    I = _eye_like(z)
    for _ in range(30):
        g, A = system.field(0.5 * (z + z1), t_mid, need_jac=True)
        R = z1 - z - h * g
        if np.max(np.abs(R), initial=0.0) <= INNER_TOL:
            return z1
        z1 = z1 - np.linalg.solve(I - 0.5 * h * A, R[..., None])[..., 0]
    g, _ = system.field(0.5 * (z + z1), t_mid)
    if np.max(np.abs(z1 - z - h * g), initial=0.0) > 1e2 * INNER_TOL:
        raise MapError("implicit midpoint inner solve diverged")
    return z1


def integrate_system(system, z, t0: float, t1: float, steps: int, need_jac: bool = False):
    """Implicit-midpoint integration of a field object exposing ``field(z, t, need_jac)``."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    z = np.array(_as_points(z), dtype=float)
    h = (t1 - t0) / steps
    J = _eye_like(z) if need_jac else None
    for n in range(steps):
        t_mid = t0 + (n + 0.5) * h
        z, M = _midpoint_step(system, z, t_mid, h, need_jac)
        if need_jac:
            J = M @ J
    return z, J


_KIND = {"one": 0, "cos": 1, "sin": 2}


@numba.njit(cache=True)
def _trig(kind, w, s):
    if kind == 0:
        return 1.0, 0.0, 0.0
    c = math.cos(w * s)
    sn = math.sin(w * s)
    if kind == 1:
        return c, -w * sn, -w * w * c
    return sn, w * c, -w * w * sn


@numba.njit(cache=True)
def _hfield(x, y, kx, wx, ky, wy, c, need_jac):
    """Field (Hy, -Hx) and its Jacobian entries for one point."""
    Hx = 0.0
    Hy = 0.0
    Hxx = 0.0
    Hxy = 0.0
    Hyy = 0.0
    for i in range(c.shape[0]):
        if c[i] == 0.0:
            continue
        X, dX, ddX = _trig(kx[i], wx[i], x)
        Y, dY, ddY = _trig(ky[i], wy[i], y)
        Hx += c[i] * dX * Y
        Hy += c[i] * X * dY
        if need_jac:
            Hxx += c[i] * ddX * Y
            Hxy += c[i] * dX * dY
            Hyy += c[i] * X * ddY
    return Hy, -Hx, Hxy, Hyy, -Hxx, -Hxy


@numba.njit(cache=True)
def _flow_kernel(Z, C, h, kx, wx, ky, wy, need_jac, tol, out_Z, out_J):
    """Implicit midpoint for each point; returns the number of failed inner solves."""
    failures = 0
    for p in range(Z.shape[0]):
        x = Z[p, 0]
        y = Z[p, 1]
        j00, j01, j10, j11 = 1.0, 0.0, 0.0, 1.0
        for n in range(C.shape[0]):
            c = C[n]
            g0x, g0y, _, _, _, _ = _hfield(x, y, kx, wx, ky, wy, c, False)
            gmx, gmy, _, _, _, _ = _hfield(
                x + 0.5 * h * g0x, y + 0.5 * h * g0y, kx, wx, ky, wy, c, False
            )
            x1 = x + h * gmx
            y1 = y + h * gmy
            ok = False
            for _ in range(60):
                gx, gy, _, _, _, _ = _hfield(
                    0.5 * (x + x1), 0.5 * (y + y1), kx, wx, ky, wy, c, False
                )
                xn = x + h * gx
                yn = y + h * gy
                delta = max(abs(xn - x1), abs(yn - y1))
                x1 = xn
                y1 = yn
                if delta <= tol:
                    ok = True
                    break
            if not ok:
                # Newton fallback on R(z1) = z1 - z - h g((z + z1)/2)
                for _ in range(30):
                    gx, gy, a00, a01, a10, a11 = _hfield(
                        0.5 * (x + x1), 0.5 * (y + y1), kx, wx, ky, wy, c, True
                    )
                    rx = x1 - x - h * gx
                    ry = y1 - y - h * gy
                    if max(abs(rx), abs(ry)) <= tol:
                        ok = True
                        break
                    m00 = 1.0 - 0.5 * h * a00
                    m01 = -0.5 * h * a01
                    m10 = -0.5 * h * a10
                    m11 = 1.0 - 0.5 * h * a11
                    det = m00 * m11 - m01 * m10
                    x1 -= (m11 * rx - m01 * ry) / det
                    y1 -= (-m10 * rx + m00 * ry) / det
                if not ok:
                    failures += 1
            if need_jac:
                _, _, a00, a01, a10, a11 = _hfield(
                    0.5 * (x + x1), 0.5 * (y + y1), kx, wx, ky, wy, c, True
                )
                # Cayley factor (I - hA/2)^-1 (I + hA/2)
                l00 = 1.0 - 0.5 * h * a00
                l01 = -0.5 * h * a01
                l10 = -0.5 * h * a10
                l11 = 1.0 - 0.5 * h * a11
                r00 = 1.0 + 0.5 * h * a00
                r01 = 0.5 * h * a01
                r10 = 0.5 * h * a10
                r11 = 1.0 + 0.5 * h * a11
                det = l00 * l11 - l01 * l10
                m00 = (l11 * r00 - l01 * r10) / det
                m01 = (l11 * r01 - l01 * r11) / det
                m10 = (-l10 * r00 + l00 * r10) / det
                m11 = (-l10 * r01 + l00 * r11) / det
                n00 = m00 * j00 + m01 * j10
                n01 = m00 * j01 + m01 * j11
                n10 = m10 * j00 + m11 * j10
                n11 = m10 * j01 + m11 * j11
                j00, j01, j10, j11 = n00, n01, n10, n11
            x = x1
            y = y1
        out_Z[p, 0] = x
        out_Z[p, 1] = y
        out_J[p, 0, 0] = j00
        out_J[p, 0, 1] = j01
        out_J[p, 1, 0] = j10
        out_J[p, 1, 1] = j11
    return failures


def _flow_spec(H: "HamiltonianSpec", z, t0, t1, steps, need_jac):
    z = np.asarray(z, dtype=float)
    shape = z.shape
    Z = np.ascontiguousarray(z.reshape(-1, 2))
    h = (t1 - t0) / steps
    tm = t0 + (np.arange(steps) + 0.5) * h
    C = np.array([[term.coeff * float(term.t(t)) for term in H.terms] for t in tm]).reshape(
        steps, len(H.terms)
    )
    kx = np.array([_KIND[t.x[0]] for t in H.terms], dtype=np.int64)
    ky = np.array([_KIND[t.y[0]] for t in H.terms], dtype=np.int64)
    wx = np.array([TWO_PI * t.x[1] for t in H.terms])
    wy = np.array([TWO_PI * t.y[1] for t in H.terms])
    out_Z = np.empty_like(Z)
    out_J = np.empty((len(Z), 2, 2))
    fails = _flow_kernel(Z, C, h, kx, wx, ky, wy, need_jac, INNER_TOL, out_Z, out_J)
    if fails:
        raise MapError(f"implicit midpoint inner solve diverged for {fails} step(s)")
    return out_Z.reshape(shape), (out_J.reshape(shape[:-1] + (2, 2)) if need_jac else None)


def integrate_flow(H: HamiltonianSpec, z, t0: float, t1: float, steps: int) -> np.ndarray:
    """Endpoint of the implicit-midpoint trajectory from time t0 to t1."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    z = _as_points(z)
    if not H.terms:
        return np.array(z, dtype=float)
    return _flow_spec(H, z, t0, t1, int(steps), False)[0]


def flow_with_jacobian(H: HamiltonianSpec, z, t0: float, t1: float, steps: int):
    """Endpoint and variational Jacobian of the discrete flow."""
    z = _as_points(z)
    if not H.terms:
        return np.array(z, dtype=float), _eye_like(z)
    return _flow_spec(H, z, t0, t1, int(steps), True)


@dataclass(frozen=True)
class Stroboscopic(LiftedMap):
    """Time-1 map of a 1-periodic Hamiltonian, started at phase ``t0``."""

    H: HamiltonianSpec
    steps: int = DEFAULT_STEPS
    t0: float = 0.0
    type_name: ClassVar[str] = "stroboscopic"

    @property
    def integrated(self):
        return True

    def evaluate(self, z):
        return integrate_flow(self.H, z, self.t0, self.t0 + 1.0, self.steps)

    def eval_jac(self, z):
        return flow_with_jacobian(self.H, z, self.t0, self.t0 + 1.0, self.steps)

    def to_dict(self):
        return {
            "type": self.type_name,
            "hamiltonian": self.H.to_dict(),
            "steps": self.steps,
            "t0": self.t0,
        }


def stroboscopic_map(H: HamiltonianSpec, steps: int = DEFAULT_STEPS) -> LiftedMap:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    return Stroboscopic(H, int(steps))


@register("stroboscopic")
def _stroboscopic_from(d):
    return Stroboscopic(
        HamiltonianSpec.from_dict(d["hamiltonian"]),
        int(d.get("steps", DEFAULT_STEPS)),
        float(d.get("t0", 0.0)),
    )
