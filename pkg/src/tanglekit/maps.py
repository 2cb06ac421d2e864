"""Lifts of area-preserving torus maps homotopic to the identity.

A map is an immutable expression tree.  Every node evaluates its lift
F: R^2 -> R^2 on arrays shaped (..., 2) and returns exact chain-rule
Jacobians shaped (..., 2, 2).  Lifts commute with integer translations,
so every node here is homotopic to the identity.

Nodes serialise to JSON documents ``{"type": ..., ...}``; compositions are
written in mathematical order, ``{"type": "compose", "maps": [g, f]}`` is
g o f (f applied first).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, ClassVar

import numpy as np

TWO_PI = 2.0 * math.pi


class MapError(RuntimeError):
    """Numerical failure while evaluating or inverting a map."""


def _as_points(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != 2:
        raise ValueError(f"points must have a trailing dimension of 2, got {z.shape}")
    return z


def _eye_like(z: np.ndarray) -> np.ndarray:
    J = np.zeros(z.shape[:-1] + (2, 2))
    J[..., 0, 0] = 1.0
    J[..., 1, 1] = 1.0
    return J


@dataclass(frozen=True)
class TwistProfile:
    """1-periodic trigonometric polynomial.

    value(s) = mean + sum_k a_k cos(2 pi k s) + b_k sin(2 pi k s)
    with ``harmonics`` a tuple of (k, a_k, b_k).
    """

    mean: float = 0.0
    harmonics: tuple = ()

    def __post_init__(self):
        h = tuple((int(k), float(a), float(b)) for k, a, b in self.harmonics)
        if any(k < 1 for k, _, _ in h):
            raise ValueError("harmonic frequencies must be >= 1")
        object.__setattr__(self, "harmonics", h)
        object.__setattr__(self, "mean", float(self.mean))

    @classmethod
    def sine(cls, amplitude: float, mean: float = 0.0) -> "TwistProfile":
        """mean + amplitude * sin(2 pi s) / (2 pi); derivative at 0 is ``amplitude``."""
        return cls(mean, ((1, 0.0, amplitude / TWO_PI),))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.full_like(s, self.mean)
        for k, a, b in self.harmonics:
            w = TWO_PI * k * s
            out = out + a * np.cos(w) + b * np.sin(w)
        return out

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        for k, a, b in self.harmonics:
            w = TWO_PI * k * s
            out = out + TWO_PI * k * (b * np.cos(w) - a * np.sin(w))
        return out

    def __neg__(self) -> "TwistProfile":
        return TwistProfile(-self.mean, tuple((k, -a, -b) for k, a, b in self.harmonics))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "harmonics": [list(h) for h in self.harmonics]}

    @classmethod
    def from_dict(cls, d) -> "TwistProfile":
        if isinstance(d, (int, float)):
            return cls(float(d))
        return cls(d.get("mean", 0.0), tuple(tuple(h) for h in d.get("harmonics", ())))


class LiftedMap:
    """Base class for map nodes."""

    type_name: ClassVar[str] = ""

    def __call__(self, z):
        return self.evaluate(_as_points(z))

    def evaluate(self, z: np.ndarray) -> np.ndarray:
        return self.eval_jac(z)[0]

    def eval_jac(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def jacobian(self, z):
        return self.eval_jac(_as_points(z))[1]

    def to_dict(self) -> dict:
        raise NotImplementedError

    def explicit_inverse(self) -> "LiftedMap | None":
        """Closed-form inverse when one exists, else None (Newton is used instead)."""
        return None

    # integrated factors (flows) carry a looser area-preservation budget
    @property
    def integrated(self) -> bool:
        return False


@dataclass(frozen=True)
class Identity(LiftedMap):
    type_name: ClassVar[str] = "identity"

    def evaluate(self, z):
        return np.array(z, dtype=float)

    def eval_jac(self, z):
        return np.array(z, dtype=float), _eye_like(z)

    def to_dict(self):
        return {"type": self.type_name}


@dataclass(frozen=True)
class Translation(LiftedMap):
    a: float
    b: float
    type_name: ClassVar[str] = "translation"

    def evaluate(self, z):
        return z + np.array([self.a, self.b])

    def eval_jac(self, z):
        return self.evaluate(z), _eye_like(z)

    def to_dict(self):
        return {"type": self.type_name, "a": self.a, "b": self.b}


@dataclass(frozen=True)
class ShearX(LiftedMap):
    """(x, y) -> (x + p(y), y)."""

    p: TwistProfile
    type_name: ClassVar[str] = "shear_x"

    def evaluate(self, z):
        w = np.array(z, dtype=float)
        w[..., 0] += self.p(z[..., 1])
        return w

    def eval_jac(self, z):
        J = _eye_like(z)
        J[..., 0, 1] = self.p.deriv(z[..., 1])
        return self.evaluate(z), J

    def explicit_inverse(self):
        return ShearX(-self.p)

    def to_dict(self):
        return {"type": self.type_name, "p": self.p.to_dict()}


@dataclass(frozen=True)
class ShearY(LiftedMap):
    """(x, y) -> (x, y + q(x))."""

    q: TwistProfile
    type_name: ClassVar[str] = "shear_y"

    def evaluate(self, z):
        w = np.array(z, dtype=float)
        w[..., 1] += self.q(z[..., 0])
        return w

    def eval_jac(self, z):
        J = _eye_like(z)
        J[..., 1, 0] = self.q.deriv(z[..., 0])
        return self.evaluate(z), J

    def explicit_inverse(self):
        return ShearY(-self.q)

    def to_dict(self):
        return {"type": self.type_name, "q": self.q.to_dict()}


@dataclass(frozen=True)
class DoubleTwist(LiftedMap):
    """f(x, y) = (x + p(y), y + q(x + p(y))): a horizontal shear followed by a vertical kick."""

    p: TwistProfile
    q: TwistProfile
    type_name: ClassVar[str] = "double_twist"

    @classmethod
    def standard(cls, K: float = 1.0, L: float = 1.0, p_mean: float = 0.0, q_mean: float = 0.0):
        """p = p_mean + K sin(2 pi y)/(2 pi), q = q_mean + L sin(2 pi x)/(2 pi)."""
        return cls(TwistProfile.sine(K, p_mean), TwistProfile.sine(L, q_mean))

    def evaluate(self, z):
        x1 = z[..., 0] + self.p(z[..., 1])
        y1 = z[..., 1] + self.q(x1)
        return np.stack([x1, y1], axis=-1)

    def eval_jac(self, z):
        x1 = z[..., 0] + self.p(z[..., 1])
        y1 = z[..., 1] + self.q(x1)
        dp = self.p.deriv(z[..., 1])
        dq = self.q.deriv(x1)
        J = np.empty(z.shape[:-1] + (2, 2))
        J[..., 0, 0] = 1.0
        J[..., 0, 1] = dp
        J[..., 1, 0] = dq
        J[..., 1, 1] = 1.0 + dq * dp
        return np.stack([x1, y1], axis=-1), J

    def explicit_inverse(self):
        # f = shear_y(q) o shear_x(p)
        return Composite((ShearX(-self.p), ShearY(-self.q)))

    def to_dict(self):
        return {"type": self.type_name, "p": self.p.to_dict(), "q": self.q.to_dict()}


@dataclass(frozen=True)
class Composite(LiftedMap):
    """maps = (g, f) means g o f."""

    maps: tuple
    type_name: ClassVar[str] = "compose"

    @property
    def integrated(self):
        return any(m.integrated for m in self.maps)

    def evaluate(self, z):
        for m in reversed(self.maps):
            z = m.evaluate(z)
        return z

    def eval_jac(self, z):
        J = None
        for m in reversed(self.maps):
            z, Jm = m.eval_jac(z)
            J = Jm if J is None else Jm @ J
        return z, J

    def explicit_inverse(self):
        parts = [m.explicit_inverse() for m in reversed(self.maps)]
        return None if any(p is None for p in parts) else Composite(tuple(parts))

    def to_dict(self):
        return {"type": self.type_name, "maps": [m.to_dict() for m in self.maps]}


@dataclass(frozen=True)
class Iterate(LiftedMap):
    base: LiftedMap
    k: int
    type_name: ClassVar[str] = "iterate"

    @property
    def integrated(self):
        return self.base.integrated

    def evaluate(self, z):
        for _ in range(self.k):
            z = self.base.evaluate(z)
        return z

    def eval_jac(self, z):
        J = _eye_like(z)
        for _ in range(self.k):
            z, Jm = self.base.eval_jac(z)
            J = Jm @ J
        return z, J

    def explicit_inverse(self):
        b = self.base.explicit_inverse()
        return None if b is None else Iterate(b, self.k)

    def to_dict(self):
        return {"type": self.type_name, "map": self.base.to_dict(), "k": self.k}


@dataclass(frozen=True)
class Inverse(LiftedMap):
    """Inverse of a lift, evaluated pointwise by damped Newton."""

    base: LiftedMap
    type_name: ClassVar[str] = "inverse"

    @property
    def integrated(self):
        return self.base.integrated

    def evaluate(self, z):
        return inverse_point(self.base, z)

    def eval_jac(self, z):
        w = inverse_point(self.base, z)
        J = self.base.jacobian(w)
        return w, np.linalg.inv(J)

    def to_dict(self):
        return {"type": self.type_name, "map": self.base.to_dict()}


# -- construction helpers ----------------------------------------------------


def compose(g: LiftedMap, f: LiftedMap) -> LiftedMap:
    """Return g o f, flattening nested compositions and dropping identities."""
    parts: list[LiftedMap] = []
    for m in (g, f):
        if isinstance(m, Composite):
            parts.extend(m.maps)
        elif not isinstance(m, Identity):
            parts.append(m)
    # merge adjacent translations
    merged: list[LiftedMap] = []
    for m in parts:
        if merged and isinstance(m, Translation) and isinstance(merged[-1], Translation):
            t = merged.pop()
            m = Translation(t.a + m.a, t.b + m.b)
        merged.append(m)
    if not merged:
        return Identity()
    if len(merged) == 1:
        return merged[0]
    return Composite(tuple(merged))


def iterate(f: LiftedMap, k: int) -> LiftedMap:
    k = int(k)
    if k < 1:
        raise ValueError("iterate needs a positive integer power")
    if k == 1:
        return f
    if isinstance(f, Identity):
        return f
    if isinstance(f, Translation):
        return Translation(k * f.a, k * f.b)
    if isinstance(f, Iterate):
        return Iterate(f.base, f.k * k)
    return Iterate(f, k)


def inverse(f: LiftedMap) -> LiftedMap:
    if isinstance(f, Inverse):
        return f.base
    if isinstance(f, Identity):
        return f
    if isinstance(f, Translation):
        return Translation(-f.a, -f.b)
    g = f.explicit_inverse()
    return Inverse(f) if g is None else g


def evaluate_lift(f: LiftedMap, z) -> np.ndarray:
    z = _as_points(z)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite input point")
    return f.evaluate(z)


def jacobian(f: LiftedMap, z) -> np.ndarray:
    return f.jacobian(z)


def _newton_inverse(f: LiftedMap, w: np.ndarray, z: np.ndarray, tol: float, max_iter: int):
    """Damped Newton for F(z) = w from the starting points z; returns (z, residual norms)."""
    z = z.copy()
    r = f.evaluate(z) - w
    err = np.linalg.norm(r, axis=1)
    # Newton keeps going past ``tol`` until roundoff stalls progress
    target = 1e-2 * tol
    active = err > target
    for _ in range(max_iter):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        _, J = f.eval_jac(z[idx])
        try:
            step = np.linalg.solve(J, -r[idx][..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise MapError("singular Jacobian during inversion") from exc
        lam = np.ones(len(idx))
        pending = np.ones(len(idx), dtype=bool)
        znew = z[idx].copy()
        rnew = r[idx].copy()
        enew = err[idx].copy()
        for _half in range(40):
            sub = np.flatnonzero(pending)
            trial = z[idx[sub]] + lam[sub, None] * step[sub]
            rt = f.evaluate(trial) - w[idx[sub]]
            et = np.linalg.norm(rt, axis=1)
            ok = et < err[idx[sub]]
            good = sub[ok]
            znew[good], rnew[good], enew[good] = trial[ok], rt[ok], et[ok]
            pending[good] = False
            lam[sub[~ok]] *= 0.5
            if not np.any(pending):
                break
        stalled = pending
        z[idx], r[idx], err[idx] = znew, rnew, enew
        still = err[idx] > target
        # points that cannot decrease further are done (roundoff floor)
        active[idx] = still & ~stalled
    return z, err


def inverse_point(f: LiftedMap, w, tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
    """Solve F(z) = w by damped Newton (vectorised over points).

    Newton starts at w; points where it stalls are restarted from the
    first-order guess 2w - F(w) and then from a ring of nearby seeds.
    """
    w = _as_points(w)
    shape = w.shape
    w = w.reshape(-1, 2)
    z, err = _newton_inverse(f, w, w, tol, max_iter)
    bad = np.flatnonzero(err >= tol)
    if bad.size:
        wb = w[bad]
        starts = [2.0 * wb - f.evaluate(wb)]
        for radius in (0.05, 0.15):
            for ang in np.arange(8) * (np.pi / 4):
                starts.append(wb + radius * np.array([np.cos(ang), np.sin(ang)]))
        for z0 in starts:
            zb, eb = _newton_inverse(f, wb, z0, tol, max_iter)
            better = eb < err[bad]
            z[bad[better]], err[bad[better]] = zb[better], eb[better]
            if np.all(err[bad] < tol):
                break
    if np.any(err >= tol):
        worst = int(np.argmax(err))
        raise MapError(
            f"inverse_point did not converge: residual {err[worst]:.3e} at w={tuple(w[worst])}"
        )
    return z.reshape(shape)


# -- serialisation ------------------------------------------------------------

_REGISTRY: dict[str, Callable[[dict], LiftedMap]] = {}


def register(name: str):
    def deco(fn):
        _REGISTRY[name] = fn
        return fn

    return deco


@register("identity")
def _identity_from(d):
    return Identity()


@register("translation")
def _translation_from(d):
    return Translation(float(d["a"]), float(d["b"]))


@register("shear_x")
def _shear_x_from(d):
    return ShearX(TwistProfile.from_dict(d["p"]))


@register("shear_y")
def _shear_y_from(d):
    return ShearY(TwistProfile.from_dict(d["q"]))


@register("double_twist")
def _double_twist_from(d):
    if "p" in d:
        return DoubleTwist(TwistProfile.from_dict(d["p"]), TwistProfile.from_dict(d["q"]))
    return DoubleTwist.standard(
        d.get("K", 1.0), d.get("L", 1.0), d.get("p_mean", 0.0), d.get("q_mean", 0.0)
    )


@register("compose")
def _compose_from(d):
    maps = [map_from_dict(m) for m in d["maps"]]
    return Composite(tuple(maps)) if len(maps) > 1 else maps[0]


@register("iterate")
def _iterate_from(d):
    return iterate(map_from_dict(d["map"]), int(d["k"]))


@register("inverse")
def _inverse_from(d):
    return Inverse(map_from_dict(d["map"]))


def map_from_dict(d: dict) -> LiftedMap:
    # the flow-based factors live in other modules; importing registers them
    from . import hamiltonian, perturbations  # noqa: F401

    kind = d.get("type") or d.get("family")
    if kind not in _REGISTRY:
        raise ValueError(f"unknown map type {kind!r}")
    return _REGISTRY[kind](d)
