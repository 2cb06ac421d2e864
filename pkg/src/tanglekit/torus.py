"""Plane/torus arithmetic and closed curves stored as lifted polylines.

Points on T^2 = R^2 / Z^2 carry coordinates in [0, 1); points of the cover
are plain pairs of reals.  A closed curve is a polyline P_0 .. P_N in the
plane with P_N = P_0 + (m, n); the integer pair (m, n) is its homology
class (equivalently its free homotopy class, since pi_1(T^2) is abelian).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

CLASS_TOL = 1e-9
TOUCH_OFFSET = 1e-12


class GeometryError(ValueError):
    """Raised for malformed curves or inconsistent geometric data."""


class TorusPoint(NamedTuple):
    x: float
    y: float


class LiftPoint(NamedTuple):
    X: float
    Y: float


class LatticeVector(NamedTuple):
    m: int
    n: int


def reduce(p) -> TorusPoint:
    """Project a lift point to the torus, components in [0, 1)."""
    arr = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise GeometryError(f"non-finite point {p!r}")
    r = reduce_array(arr)
    return TorusPoint(float(r[0]), float(r[1]))


def reduce_array(z: np.ndarray) -> np.ndarray:
    """Vectorised reduction mod Z^2 for arrays shaped (..., 2)."""
    r = np.mod(z, 1.0)
    # np.mod can return exactly 1.0 for tiny negative inputs
    return np.where(r >= 1.0, 0.0, r)


def torus_delta(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimal-image displacement b - a on the torus, components in [-1/2, 1/2)."""
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    return d - np.floor(d + 0.5)


def torus_distance(a, b) -> np.ndarray:
    return np.linalg.norm(torus_delta(a, b), axis=-1)


@dataclass(frozen=True)
class ClosedCurve:
    """Closed curve on the torus given by a lifted polyline.

    ``vertices`` has shape (N + 1, 2) and its last row equals the first row
    translated by ``cls``.
    """

    vertices: np.ndarray
    cls: LatticeVector = field(default=LatticeVector(0, 0))

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 2:
            raise GeometryError("a closed curve needs at least two vertices")
        if not np.all(np.isfinite(v)):
            raise GeometryError("non-finite vertex")
        cls = LatticeVector(int(self.cls[0]), int(self.cls[1]))
        gap = v[-1] - v[0] - np.array(cls, dtype=float)
        if np.max(np.abs(gap)) > CLASS_TOL:
            raise GeometryError(
                f"endpoint displacement {tuple(v[-1] - v[0])} does not match class {tuple(cls)}"
            )
        if np.any(np.all(np.diff(v, axis=0) == 0.0, axis=1)):
            raise GeometryError("consecutive vertices must be distinct")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "cls", cls)

    @classmethod
    def from_points(cls, points, klass=None) -> "ClosedCurve":
        """Build a curve, inferring the class from the endpoint displacement if not given."""
        pts = np.asarray(points, dtype=float)
        if klass is None:
            d = pts[-1] - pts[0]
            klass = (int(round(d[0])), int(round(d[1])))
        return cls(pts, LatticeVector(*klass))

    @property
    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        v = self.vertices
        return v[:-1], v[1:]

    def reversed(self) -> "ClosedCurve":
        return ClosedCurve(self.vertices[::-1].copy(), LatticeVector(-self.cls.m, -self.cls.n))

    def translated(self, shift) -> "ClosedCurve":
        return ClosedCurve(self.vertices + np.asarray(shift, dtype=float), self.cls)

    def refined(self, n_min: int) -> "ClosedCurve":
        """Subdivide segments by arc length so the curve has at least ``n_min`` segments."""
        v = self.vertices
        seg = np.linalg.norm(np.diff(v, axis=0), axis=1)
        total = seg.sum()
        if len(seg) >= n_min or total == 0.0:
            return self
        pieces = np.maximum(1, np.ceil(seg / total * n_min).astype(int))
        out = [v[:1]]
        for a, b, k in zip(v[:-1], v[1:], pieces):
            t = np.arange(1, k + 1)[:, None] / k
            out.append(a + t * (b - a))
        pts = np.vstack(out)
        pts[-1] = pts[0] + np.array(self.cls, dtype=float)
        return ClosedCurve(pts, self.cls)


def horizontal_loop(y0: float = 0.0, n: int = 1) -> ClosedCurve:
    """The generator a_1: y = y0 traversed in +x."""
    x = np.linspace(0.0, 1.0, n + 1)
    return ClosedCurve(np.column_stack([x, np.full_like(x, y0)]), LatticeVector(1, 0))


def vertical_loop(x0: float = 0.0, n: int = 1, downward: bool = False) -> ClosedCurve:
    """The generator b_1: x = x0 traversed in +y (or -y when ``downward``)."""
    y = np.linspace(0.0, 1.0, n + 1)
    if downward:
        y = -y
    return ClosedCurve(
        np.column_stack([np.full_like(y, x0), y]), LatticeVector(0, -1 if downward else 1)
    )


def curve_class(c: ClosedCurve) -> LatticeVector:
    d = c.vertices[-1] - c.vertices[0]
    rounded = np.round(d)
    if np.max(np.abs(d - rounded)) > CLASS_TOL or tuple(int(r) for r in rounded) != tuple(c.cls):
        raise GeometryError(f"class mismatch: displacement {tuple(d)} vs declared {tuple(c.cls)}")
    return LatticeVector(int(rounded[0]), int(rounded[1]))


def shoelace(points: np.ndarray) -> float:
    """Signed area (CCW positive) of a closed planar polygon; the last vertex may repeat the first."""
    p = np.asarray(points, dtype=float)
    x, y = p[:, 0], p[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    # shift to the centroid to limit cancellation
    cx, cy = x.mean(), y.mean()
    return 0.5 * float(np.sum((x - cx) * (yn - cy) - (xn - cx) * (y - cy)))


def signed_area(c: ClosedCurve) -> float:
    if tuple(curve_class(c)) != (0, 0):
        raise GeometryError("area undefined for essential curve")
    return shoelace(c.vertices[:-1])


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _segment_hits(a0, a1, b0, b1):
    """Pairwise transverse hits between segment arrays a and b (already offset).

    Returns (t, u, sign, touching) for every pair; ``t, u`` are the line
    parameters on a and b.  ``touching`` marks degenerate configurations
    (parallel overlap or a hit at a segment endpoint) that need the
    generic-position offset.
    """
    da = a1 - a0
    db = b1 - b0
    den = _cross(da, db)
    w = b0 - a0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = _cross(w, db) / den
        u = _cross(w, da) / den
    eps = 1e-14
    parallel = np.abs(den) <= eps * np.linalg.norm(da, axis=-1) * np.linalg.norm(db, axis=-1)
    collinear = parallel & (np.abs(_cross(w, da)) <= eps * (1 + np.linalg.norm(da, axis=-1)))
    # collinear pairs touch if their projections overlap
    if np.any(collinear):
        la = np.einsum("...i,...i", da, da)
        s0 = np.einsum("...i,...i", b0 - a0, da) / la
        s1 = np.einsum("...i,...i", b1 - a0, da) / la
        overlap = collinear & (np.maximum(s0, s1) >= 0) & (np.minimum(s0, s1) <= 1)
    else:
        overlap = collinear
    inside = ~parallel & (t >= -eps) & (t <= 1 + eps) & (u >= -eps) & (u <= 1 + eps)
    near_end = inside & (
        (np.abs(t) <= eps) | (np.abs(t - 1) <= eps) | (np.abs(u) <= eps) | (np.abs(u - 1) <= eps)
    )
    hit = inside & ~near_end
    return hit, np.sign(den), near_end | overlap, t, u


def _lattice_offsets(a0, a1, b0, b1):
    """Integer translates v with bbox(a) and bbox(b) + v overlapping (one segment pair)."""
    alo, ahi = np.minimum(a0, a1), np.maximum(a0, a1)
    blo, bhi = np.minimum(b0, b1), np.maximum(b0, b1)
    lo = np.ceil(alo - bhi - 1e-9).astype(int)
    hi = np.floor(ahi - blo + 1e-9).astype(int)
    return lo, hi


def polyline_crossing_count(c1: ClosedCurve, c2: ClosedCurve) -> tuple[int, bool]:
    """Signed count of transverse crossings of the projected curves.

    Sign convention: a crossing counts +1 when (tangent of c1, tangent of c2)
    is a positively oriented frame.  Returns (count, touching_found).
    """
    a0, a1 = c1.segments
    b0, b1 = c2.segments
    total = 0
    touching = False
    for i in range(len(a0)):
        lo, hi = _lattice_offsets(a0[i], a1[i], b0, b1)
        for j in range(len(b0)):
            xs = np.arange(lo[j, 0], hi[j, 0] + 1)
            ys = np.arange(lo[j, 1], hi[j, 1] + 1)
            if len(xs) == 0 or len(ys) == 0:
                continue
            off = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
            hit, sgn, touch, _, _ = _segment_hits(a0[i], a1[i], b0[j] + off, b1[j] + off)
            total += int(np.sum(sgn[hit]))
            touching = touching or bool(np.any(touch))
    return total, touching


def intersection_number(c1: ClosedCurve, c2: ClosedCurve) -> int:
    """Algebraic intersection number, checked against an explicit crossing count."""
    k1, k2 = curve_class(c1), curve_class(c2)
    lattice = k1.m * k2.n - k1.n * k2.m
    count, touching = polyline_crossing_count(c1, c2)
    attempt = 0
    while touching and attempt < 8:
        # restore generic position with a deterministic micro-offset of c2
        a0, a1 = c1.segments
        t = a1[0] - a0[0]
        t = t / np.linalg.norm(t)
        nrm = np.array([-t[1], t[0]])
        ang = attempt * 0.6180339887498949
        rot = np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
        shift = TOUCH_OFFSET * (1 + attempt) * (rot @ (t + nrm))
        count, touching = polyline_crossing_count(c1, c2.translated(shift))
        attempt += 1
    if touching:
        raise GeometryError("could not restore generic position for crossing count")
    if count != lattice:
        raise GeometryError(
            f"polyline crossing count {count} disagrees with lattice pairing {lattice}"
        )
    return lattice


# -- CSV -----------------------------------------------------------------


def curve_to_csv(c: ClosedCurve, path=None) -> str:
    buf = io.StringIO()
    buf.write(f"# class {c.cls.m} {c.cls.n}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["X", "Y"])
    for X, Y in c.vertices:
        w.writerow([repr(float(X)), repr(float(Y))])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def curve_from_csv(source) -> ClosedCurve:
    """Parse a curve from CSV text or a path."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text()
    else:
        text = source
    klass = None
    rows = []
    for line in text.splitlines():
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            parts = s[1:].split()
            if len(parts) == 3 and parts[0] == "class":
                klass = (int(parts[1]), int(parts[2]))
            continue
        if s.replace(" ", "").upper() == "X,Y":
            continue
        x, y = s.split(",")[:2]
        rows.append((float(x), float(y)))
    if klass is None:
        raise GeometryError("missing '# class m n' header")
    return ClosedCurve(np.array(rows), LatticeVector(*klass))
