"""Flux across closed curves, mean rotation vectors, and the flux vector.

Two independent routes are kept deliberately separate:

* swept area: the signed area of a plane region D with boundary
  f(l) - l (closed by two connectors that cancel on the torus);
* mean displacement: the fundamental-domain average of F(z) - z.

Orientation: the flux across an oriented curve counts area carried from its
right-hand side to its left-hand side.  For the horizontal generator a_1
(traversed in +x) that is upward transport, for the vertical generator b_1
the flux vector reports rightward transport (b_1 traversed in -y), so that
``phi_a == ry`` and ``phi_b == rx`` modulo 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .maps import LiftedMap
from .torus import ClosedCurve, horizontal_loop, vertical_loop

DEFAULT_REFINE = 512
DUALITY_TOL = 1e-6
WRAP_BAND = 1e-9


def _gauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


_G8 = _gauss(8)
_G4 = _gauss(4)


class FluxError(RuntimeError):
    """Raised when the two flux routes disagree or a curve maps inconsistently."""


def wrap01(v):
    """Reduce mod 1 into [0, 1); values within 1e-9 below 1 report as 0."""
    r = np.mod(np.asarray(v, dtype=float), 1.0)
    r = np.where(r > 1.0 - WRAP_BAND, 0.0, r)
    return float(r) if np.ndim(r) == 0 else r


def circle_distance(a, b):
    """Distance between reals read modulo 1."""
    d = np.mod(np.asarray(a, dtype=float) - np.asarray(b, dtype=float) + 0.5, 1.0) - 0.5
    return np.abs(d)


@dataclass(frozen=True)
class RotationVector:
    rx: float
    ry: float

    def as_array(self):
        return np.array([self.rx, self.ry])


@dataclass(frozen=True)
class FluxVector:
    phi_a: float
    phi_b: float
    # unreduced swept areas; these depend on the chosen lift
    raw_a: float = 0.0
    raw_b: float = 0.0
    rotation: RotationVector | None = None
    method_agreement: bool = True

    def as_array(self):
        return np.array([self.phi_a, self.phi_b])

    def to_dict(self) -> dict:
        rot = None if self.rotation is None else [self.rotation.rx, self.rotation.ry]
        return {
            "phi_a": self.phi_a,
            "phi_b": self.phi_b,
            "representative": [self.raw_a, self.raw_b],
            "rotation": rot,
            "method_agreement": self.method_agreement,
        }


def _segment_area(f: LiftedMap, a: np.ndarray, b: np.ndarray, origin: np.ndarray):
    """Gauss-8 and Gauss-4 values of 1/2 int (X dY - Y dX) along the images of segments a->b."""
    d = b - a
    t = np.concatenate([_G8[0], _G4[0]])[None, :, None]
    pts = a[:, None, :] + t * d[:, None, :]
    W, J = f.eval_jac(pts)
    dW = np.einsum("...ij,...j->...i", J, np.broadcast_to(d[:, None, :], pts.shape))
    W = W - origin
    integrand = 0.5 * (W[..., 0] * dW[..., 1] - W[..., 1] * dW[..., 0])
    return integrand[:, :8] @ _G8[1], integrand[:, 8:] @ _G4[1]


def _mapped_curve_area(f, a, b, origin, tol=1e-13, max_depth=30):
    """Adaptive composite Gauss rule over the image of the polyline a -> b.

    The Gauss-4 value serves as a (pessimistic) error estimate for Gauss-8;
    segments failing the test are halved.
    """
    total = 0.0
    for _ in range(max_depth):
        g8, g4 = _segment_area(f, a, b, origin)
        ok = np.abs(g8 - g4) <= tol * (1.0 + np.abs(g8))
        total += float(np.sum(g8[ok]))
        bad = ~ok
        if not np.any(bad):
            return total
        mid = 0.5 * (a[bad] + b[bad])
        a, b = np.concatenate([a[bad], mid]), np.concatenate([mid, b[bad]])
    return total + float(np.sum(_segment_area(f, a, b, origin)[0]))


def swept_area(f: LiftedMap, l: ClosedCurve, n_refine: int = DEFAULT_REFINE) -> float:
    """Signed (CCW-positive) area of the plane region bounded by f(l), a connector, l reversed, a connector."""
    c = l.refined(n_refine)
    P = c.vertices
    Q0, QN = f.evaluate(P[[0, -1]])
    shift = QN - Q0 - np.array(c.cls, dtype=float)
    if np.max(np.abs(shift)) > 1e-9:
        raise FluxError(f"image curve class differs from curve class by {tuple(shift)}")
    origin = P[0]
    area = _mapped_curve_area(f, P[:-1], P[1:], origin)

    def cross(u, v):
        u, v = u - origin, v - origin
        return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]

    straight = cross(QN, P[-1]) + float(np.sum(cross(P[1:][::-1], P[:-1][::-1]))) + cross(P[0], Q0)
    return area + 0.5 * float(straight)


def flux_across_curve(f: LiftedMap, l: ClosedCurve, n_refine: int = DEFAULT_REFINE) -> float:
    """Area carried across ``l`` from its right to its left, modulo 1."""
    return wrap01(-swept_area(f, l, n_refine))


def mean_rotation_vector(f: LiftedMap, grid_n: int = 512) -> RotationVector:
    """Midpoint-rule average of F(z) - z over the unit square."""
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    s = (np.arange(grid_n) + 0.5) / grid_n
    sums = np.zeros(2)
    # fixed block order keeps the summation deterministic
    rows_per_block = max(1, 65536 // grid_n)
    for start in range(0, grid_n, rows_per_block):
        xs = s[start : start + rows_per_block]
        Z = np.stack(np.meshgrid(xs, s, indexing="ij"), axis=-1).reshape(-1, 2)
        D = f.evaluate(Z) - Z
        sums += D.sum(axis=0)
    r = sums / grid_n**2
    return RotationVector(float(r[0]), float(r[1]))


def converged_rotation(f: LiftedMap, start: int = 32, max_n: int = 512, tol: float = 1e-10):
    """Double the grid until successive averages agree to ``tol`` (or ``max_n`` is reached)."""
    n = start
    prev = mean_rotation_vector(f, n)
    while n < max_n:
        n *= 2
        cur = mean_rotation_vector(f, n)
        if np.max(np.abs(cur.as_array() - prev.as_array())) <= tol:
            return cur, n
        prev = cur
    return prev, n


def flux_vector(
    f: LiftedMap,
    n_refine: int = DEFAULT_REFINE,
    grid_n: int | None = None,
    tol: float = DUALITY_TOL,
    check: bool = True,
) -> FluxVector:
    """Fluxes across a_1 and b_1, cross-checked against the mean rotation vector.

    With ``grid_n`` None the rotation grid doubles from 32 until converged.
    """
    raw_a = -swept_area(f, horizontal_loop(0.0), n_refine)
    raw_b = -swept_area(f, vertical_loop(0.0, downward=True), n_refine)
    phi_a, phi_b = wrap01(raw_a), wrap01(raw_b)
    if grid_n is None:
        rot, _ = converged_rotation(f)
    else:
        rot = mean_rotation_vector(f, grid_n)
    gap = max(float(circle_distance(phi_a, rot.ry)), float(circle_distance(phi_b, rot.rx)))
    agree = gap <= tol
    if check and not agree:
        raise FluxError(
            f"swept-area flux ({phi_a:.12g}, {phi_b:.12g}) disagrees with mean rotation "
            f"({rot.ry:.12g}, {rot.rx:.12g}) by {gap:.3e}"
        )
    return FluxVector(phi_a, phi_b, raw_a, raw_b, rot, agree)
