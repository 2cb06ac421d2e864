"""Homoclinic crossings, wedge-region entries, branch accumulation and recurrence.

Branches live in the lift; they intersect on the torus.  Crossings are
found with a uniform spatial hash over the unit square whose cells wrap
around, so every candidate pair carries the lattice offset that brings
the stable segment next to the unstable one.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .manifolds import ManifoldBranch
from .maps import LiftedMap
from .torus import LatticeVector, TorusPoint, reduce, reduce_array, torus_delta

TANGENCY_ANGLE = 1e-6
REFINE_LEVELS = 48


@dataclass(frozen=True)
class Crossing:
    point: TorusPoint
    s_param: float
    u_param: float
    angle: float
    orient: int
    lift_point: tuple = ()  # intersection in the unstable branch's lift
    offset: tuple = (0, 0)  # lattice shift applied to the stable branch
    u_segment: int = -1
    s_segment: int = -1
    # intersection of the true invariant curves near the polyline crossing
    homoclinic_point: tuple | None = None

    def to_dict(self) -> dict:
        return {
            "point": [float(self.point.x), float(self.point.y)],
            "s_param": self.s_param,
            "u_param": self.u_param,
            "angle": self.angle,
            "orient": self.orient,
            "offset": list(self.offset),
            "homoclinic_point": None if self.homoclinic_point is None else list(self.homoclinic_point),
        }


@dataclass(frozen=True)
class CrossingReport:
    crossings: list
    suspects: list = field(default_factory=list)

    def __len__(self):
        return len(self.crossings)

    def __iter__(self):
        return iter(self.crossings)

    def __getitem__(self, i):
        return self.crossings[i]


# -- geometry helpers ----------------------------------------------------------


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def segment_intersections(P0, P1, Q0, Q1):
    """Closed-form intersection of segment pairs; returns (hit, t, u) with P0 + t(P1-P0) = Q0 + u(Q1-Q0)."""
    r = P1 - P0
    s = Q1 - Q0
    den = _cross(r, s)
    qp = Q0 - P0
    safe = np.where(den != 0, den, 1.0)
    t = _cross(qp, s) / safe
    u = _cross(qp, r) / safe
    hit = (den != 0) & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)
    return hit, t, u


def _point_segment_distance(q, A, B):
    d = B - A
    dd = np.sum(d * d, axis=-1)
    t = np.where(dd > 0, np.sum((q - A) * d, axis=-1) / np.where(dd > 0, dd, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    return np.linalg.norm(A + t[..., None] * d - q, axis=-1)


def _segment_distance(A0, A1, B0, B1):
    hit, _, _ = segment_intersections(A0, A1, B0, B1)
    d = np.minimum.reduce([
        _point_segment_distance(A0, B0, B1),
        _point_segment_distance(A1, B0, B1),
        _point_segment_distance(B0, A0, A1),
        _point_segment_distance(B1, A0, A1),
    ])
    return np.where(hit, 0.0, d)


def polyline_distance(points, polyline) -> np.ndarray:
    """Exact torus distance from each point to a lifted polyline.

    The nearest vertex bounds the distance by d; any segment that could be
    closer has an endpoint within d + (longest segment), so only segments
    around vertices in that ball are measured.
    """
    points = np.atleast_2d(np.asarray(points, float))
    P = np.asarray(polyline, float)
    if len(P) == 1:
        return np.linalg.norm(torus_delta(P[0], points), axis=1)
    reach = float(np.max(np.linalg.norm(np.diff(P, axis=0), axis=1)))
    tree = cKDTree(reduce_array(P), boxsize=1.0)
    q = reduce_array(points)
    d0, _ = tree.query(q, k=1)
    best = np.asarray(d0, float).copy()
    for n, (qn, near) in enumerate(zip(points, tree.query_ball_point(q, d0 + reach + 1e-15))):
        v = np.asarray(near, dtype=np.int64)
        i = np.unique(np.concatenate([np.clip(v - 1, 0, len(P) - 2), np.clip(v, 0, len(P) - 2)]))
        A, B = P[i], P[i + 1]
        # bring the point next to each segment in the lift
        z = A + torus_delta(A, qn)
        best[n] = min(best[n], float(np.min(_point_segment_distance(z, A, B))))
    return best


# -- crossings -----------------------------------------------------------------


def _hash_entries(S0, S1, nc):
    """Wrapped cell keys and lattice offsets for every cell a segment's bounding box touches."""
    h = 1.0 / nc
    shift = np.floor(S0)
    A0, A1 = S0 - shift, S1 - shift
    lo = np.floor(np.minimum(A0, A1) / h).astype(np.int64)
    hi = np.floor(np.maximum(A0, A1) / h).astype(np.int64)
    span = int(np.max(hi - lo, initial=0))
    seg_idx, cells = [], []
    idx = np.arange(len(S0))
    for dx in range(span + 1):
        for dy in range(span + 1):
            c = lo + np.array([dx, dy])
            ok = np.all(c <= hi, axis=1)
            seg_idx.append(idx[ok])
            cells.append(c[ok])
    seg_idx = np.concatenate(seg_idx)
    cells = np.concatenate(cells)
    wrap = np.floor_divide(cells, nc)
    key = np.mod(cells[:, 0], nc) * nc + np.mod(cells[:, 1], nc)
    offset = shift[seg_idx].astype(np.int64) + wrap
    return key, seg_idx, offset


def candidate_pairs(U, S, cell: float):
    """Unique (i, j, vx, vy) with unstable segment i near stable segment j translated by v."""
    nc = max(1, int(math.floor(1.0 / cell)))
    ku, iu, ou = _hash_entries(U[:-1], U[1:], nc)
    ks, js, os_ = _hash_entries(S[:-1], S[1:], nc)
    return _match_entries(ku, iu, ou, ks, js, os_)


def _match_entries(ku, iu, ou, ks, js, os_):
    order = np.argsort(ks, kind="stable")
    ks, js, os_ = ks[order], js[order], os_[order]
    lo = np.searchsorted(ks, ku, "left")
    hi = np.searchsorted(ks, ku, "right")
    cnt = hi - lo
    if cnt.sum() == 0:
        return np.zeros((0, 4), dtype=np.int64)
    rep = np.repeat(np.arange(len(ku)), cnt)
    starts = np.repeat(lo, cnt)
    within = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    sj = starts + within
    v = ou[rep] - os_[sj]
    quads = np.column_stack([iu[rep], js[sj], v])
    # one integer key per quadruple makes the duplicate removal a flat sort
    lo_v = v.min(axis=0)
    w = v.max(axis=0) - lo_v + 1
    nj = int(js.max()) + 1
    key = ((quads[:, 0] * nj + quads[:, 1]) * w[0] + (v[:, 0] - lo_v[0])) * w[1] + (v[:, 1] - lo_v[1])
    _, first = np.unique(key, return_index=True)
    return quads[first]


def _orient_and_angle(r, s):
    cr = _cross(r, s)
    dt = np.sum(r * s, axis=-1)
    angle = np.arctan2(np.abs(cr), np.abs(dt))
    return np.sign(cr).astype(int), angle


def find_crossings(
    bu: ManifoldBranch,
    bs: ManifoldBranch,
    exclude_radius: float,
    f: LiftedMap | None = None,
    workers: int = 1,
    tangency: float = TANGENCY_ANGLE,
) -> CrossingReport:
    """Transverse crossings of two branches on the torus, sorted by the first branch's arc length.

    With ``f`` given each crossing also carries ``homoclinic_point``, the
    intersection of the true curves found by bisecting both parameter
    intervals of the crossing segment pair.
    """
    if not exclude_radius > 0:
        raise ValueError("exclude_radius must be positive")
    U, S = bu.polyline, bs.polyline
    seg_u = np.linalg.norm(np.diff(U, axis=0), axis=1)
    seg_s = np.linalg.norm(np.diff(S, axis=0), axis=1)
    cell = max(bu.settings.max_spacing, float(seg_u.max(initial=0)), float(seg_s.max(initial=0)))
    quads = candidate_pairs(U, S, cell)

    def test(q):
        i, j, v = q[:, 0], q[:, 1], q[:, 2:].astype(float)
        hit, t, u = segment_intersections(U[i], U[i + 1], S[j] + v, S[j + 1] + v)
        return q[hit], t[hit], u[hit]

    if workers > 1 and len(quads) > 4 * workers:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(test, np.array_split(quads, workers)))
        q = np.concatenate([p[0] for p in parts])
        t = np.concatenate([p[1] for p in parts])
        u = np.concatenate([p[2] for p in parts])
    else:
        q, t, u = test(quads)
    i, j, v = q[:, 0], q[:, 1], q[:, 2:]
    pts = U[i] + t[:, None] * (U[i + 1] - U[i])
    base = bu.orbit.base_array()
    far = np.linalg.norm(torus_delta(base, pts), axis=1) >= exclude_radius
    i, j, v, t, u, pts = i[far], j[far], v[far], t[far], u[far], pts[far]
    u_par = bu.arclen[i] + t * seg_u[i]
    s_par = bs.arclen[j] + u * seg_s[j]
    orient, angle = _orient_and_angle(U[i + 1] - U[i], S[j + 1] - S[j])
    order = np.lexsort((s_par, u_par))
    crossings, suspects = [], []
    last = None
    for n in order:
        key = (u_par[n], s_par[n])
        # a crossing through a shared vertex shows up on both neighbouring segments
        if last is not None and abs(key[0] - last[0]) < 1e-11 and abs(key[1] - last[1]) < 1e-11:
            continue
        last = key
        c = Crossing(
            reduce(pts[n]), float(s_par[n]), float(u_par[n]), float(angle[n]), int(orient[n]),
            (float(pts[n, 0]), float(pts[n, 1])), (int(v[n, 0]), int(v[n, 1])), int(i[n]), int(j[n]),
        )
        (crossings if angle[n] >= tangency else suspects).append(c)
    if f is not None and crossings:
        crossings = refine_crossings(crossings, bu, bs, f)
    return CrossingReport(crossings, suspects)


def refine_crossings(crossings, bu: ManifoldBranch, bs: ManifoldBranch, f: LiftedMap):
    """Attach the intersection of the true branches to each crossing by nested parameter bisection."""
    gu, gs = bu.step_map(f), bs.step_map(f)
    n = len(crossings)
    ia = np.array([c.u_segment for c in crossings])
    ja = np.array([c.s_segment for c in crossings])
    v = np.array([c.offset for c in crossings], float)
    ua, ub = bu.tau[ia].copy(), bu.tau[ia + 1].copy()
    sa, sb = bs.tau[ja].copy(), bs.tau[ja + 1].copy()
    # the periodic point itself has tau = -inf; start such segments at the seed vertex
    ua, sa = np.where(np.isfinite(ua), ua, 0.0), np.where(np.isfinite(sa), sa, 0.0)
    Pa, Pb = bu.polyline[ia].copy(), bu.polyline[ia + 1].copy()
    Qa, Qb = bs.polyline[ja] + v, bs.polyline[ja + 1] + v
    best = np.array([c.lift_point for c in crossings], float)
    active = np.ones(n, dtype=bool)
    for _ in range(REFINE_LEVELS):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        um = 0.5 * (ua[idx] + ub[idx])
        sm = 0.5 * (sa[idx] + sb[idx])
        Pm = bu.points_at(um, gu)
        Qm = bs.points_at(sm, gs) + v[idx]
        choice = np.full(idx.size, -1)
        point = np.zeros((idx.size, 2))
        for code, (pu, ps) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
            A0, A1 = (Pa[idx], Pm) if pu == 0 else (Pm, Pb[idx])
            B0, B1 = (Qa[idx], Qm) if ps == 0 else (Qm, Qb[idx])
            hit, t, _ = segment_intersections(A0, A1, B0, B1)
            take = hit & (choice < 0)
            choice[take] = code
            point[take] = A0[take] + t[take, None] * (A1[take] - A0[take])
        ok = choice >= 0
        # no sub-pair crosses: the chords have resolved the curves as far as they can
        active[idx[~ok]] = False
        k, c, um, sm, Pm, Qm = idx[ok], choice[ok], um[ok], sm[ok], Pm[ok], Qm[ok]
        best[k] = point[ok]
        left_u, left_s = c < 2, (c % 2) == 0
        ub[k] = np.where(left_u, um, ub[k])
        ua[k] = np.where(left_u, ua[k], um)
        Pb[k] = np.where(left_u[:, None], Pm, Pb[k])
        Pa[k] = np.where(left_u[:, None], Pa[k], Pm)
        sb[k] = np.where(left_s, sm, sb[k])
        sa[k] = np.where(left_s, sa[k], sm)
        Qb[k] = np.where(left_s[:, None], Qm, Qb[k])
        Qa[k] = np.where(left_s[:, None], Qa[k], Qm)
        small = np.maximum(np.linalg.norm(Pb[k] - Pa[k], axis=1), np.linalg.norm(Qb[k] - Qa[k], axis=1)) < 1e-14
        active[k[small]] = False
    out = []
    for c, p in zip(crossings, best):
        out.append(Crossing(c.point, c.s_param, c.u_param, c.angle, c.orient, c.lift_point, c.offset,
                            c.u_segment, c.s_segment, (float(p[0]), float(p[1]))))
    return out


# -- wedge region --------------------------------------------------------------


@dataclass(frozen=True)
class WedgeRegion:
    eta: float
    delta: float
    base: tuple
    e_u: tuple
    e_s: tuple

    def __post_init__(self):
        if not (self.eta > 0 and self.delta > 0 and self.delta < self.eta):
            raise ValueError("wedge needs 0 < delta < eta")

    @classmethod
    def at_orbit(cls, orbit, eta: float, delta: float) -> "WedgeRegion":
        if orbit.eigenframe is None:
            raise ValueError("wedge region needs a hyperbolic orbit")
        return cls(eta, delta, tuple(orbit.base), tuple(orbit.eigenframe[0]), tuple(orbit.eigenframe[1]))

    def _inv_frame(self):
        E = np.column_stack([self.e_u, self.e_s])
        return np.linalg.inv(E)

    def chart(self, z) -> np.ndarray:
        """Chart coordinates (x along e_u, y along e_s) of the minimal-image offset from the base."""
        d = torus_delta(np.array(self.base, float), np.asarray(z, float))
        return d @ self._inv_frame().T

    def contains(self, c) -> np.ndarray:
        x, y = c[..., 0], c[..., 1]
        return (x * y <= self.delta * self.eta) & (x >= 0) & (x <= self.eta) & (y >= 0) & (y <= self.eta)


@dataclass(frozen=True)
class WedgeEntry:
    arclen: float
    chart: tuple
    lift_point: tuple
    lattice_class: LatticeVector

    def to_dict(self):
        return {
            "arclen": self.arclen,
            "chart": list(self.chart),
            "lift_point": list(self.lift_point),
            "class": [self.lattice_class.m, self.lattice_class.n],
        }


@dataclass(frozen=True)
class EntrySequence:
    entries: list
    diagnostic: str = ""

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def chart_x(self) -> np.ndarray:
        return np.array([e.chart[0] for e in self.entries])


def wedge_entries(
    bu: ManifoldBranch, w: WedgeRegion, class_filter=None, f: LiftedMap | None = None
) -> EntrySequence:
    """Entries of an unstable branch into the wedge through its top edge y = eta.

    An entry is the first crossing of the chart line y = eta with
    0 <= x <= delta after the branch has visited the outside of the wedge.
    The crossing is located by linear interpolation between bracketing
    vertices; with ``f`` given one secant step on the true branch follows.
    """
    P = bu.polyline
    C = w.chart(P)
    inside = w.contains(C)
    y = C[:, 1] - w.eta
    # a segment whose chart image jumps (minimal-image wrap) is not a crossing
    dP = np.diff(P, axis=0)
    dC = np.diff(C, axis=0) @ np.column_stack([w.e_u, w.e_s]).T
    smooth = np.linalg.norm(dC - dP, axis=1) < 1e-9
    down = (y[:-1] > 0) & (y[1:] <= 0) & smooth
    g = bu.step_map(f) if f is not None else None
    entries = []
    outside_seen = False
    base = np.array(w.base, float)
    cand = set(np.flatnonzero(down).tolist())
    first_out = np.flatnonzero(~inside)
    if first_out.size == 0:
        return EntrySequence([], "branch never leaves the wedge")
    for n in range(len(P) - 1):
        if not inside[n]:
            outside_seen = True
        if n not in cand or not outside_seen:
            continue
        t = y[n] / (y[n] - y[n + 1])
        if g is not None and np.all(np.isfinite(bu.tau[n : n + 2])):
            # one secant step on the true curve, parametrised by tau
            ta, tb = bu.tau[n], bu.tau[n + 1]
            tm = ta + t * (tb - ta)
            ym = w.chart(bu.points_at([tm], g))[0, 1] - w.eta
            if ym > 0:
                ta_, ya_, tb_, yb_ = tm, ym, tb, y[n + 1]
            else:
                ta_, ya_, tb_, yb_ = ta, y[n], tm, ym
            if ya_ != yb_:
                ts = ta_ + ya_ / (ya_ - yb_) * (tb_ - ta_)
                z = bu.points_at([ts], g)[0]
            else:
                z = bu.points_at([tm], g)[0]
            c = w.chart(z)
            # arc length for the refined point from the linear estimate
            s = bu.arclen[n] + t * (bu.arclen[n + 1] - bu.arclen[n])
        else:
            z = P[n] + t * (P[n + 1] - P[n])
            c = C[n] + t * (C[n + 1] - C[n])
            s = bu.arclen[n] + t * (bu.arclen[n + 1] - bu.arclen[n])
        if not (0.0 <= c[0] <= w.delta):
            continue
        d = torus_delta(base, z)
        cls = np.rint(z - d - base).astype(int)
        entry = WedgeEntry(float(s), (float(c[0]), float(c[1])), (float(z[0]), float(z[1])),
                           LatticeVector(int(cls[0]), int(cls[1])))
        outside_seen = False
        if class_filter is not None and tuple(entry.lattice_class) != tuple(class_filter):
            continue
        entries.append(entry)
    diag = "" if entries else "branch does not re-enter the wedge within its computed extent"
    return EntrySequence(entries, diag)


# -- accumulation and recurrence ------------------------------------------------

BRANCH_ORDER = (("unstable", 1), ("unstable", -1), ("stable", 1), ("stable", -1))


def accumulation_report(branches: dict, radius: float) -> dict:
    """Symmetric 4x4 matrix of minimal torus distances between branches outside B_radius(p)."""
    keys = [k for k in BRANCH_ORDER if k in branches]
    base = branches[keys[0]].orbit.base_array()
    segs = {}
    for k in keys:
        P = branches[k].polyline
        keep = np.linalg.norm(torus_delta(base, P), axis=1) >= radius
        ok = keep[:-1] & keep[1:]
        segs[k] = (P[:-1][ok], P[1:][ok])
    n = len(keys)
    M = np.zeros((n, n))
    for a in range(n):
        for c in range(a + 1, n):
            M[a, c] = M[c, a] = _segset_distance(segs[keys[a]], segs[keys[c]])
    labels = [f"{'u' if k[0] == 'unstable' else 's'}{'+' if k[1] > 0 else '-'}" for k in keys]
    adj = [(a, c) for a in range(n) for c in range(n) if labels[a][0] == "u" and labels[c][0] == "s"]
    if adj:
        a, c = min(adj, key=lambda p: (M[p], p))
        pair, val = (labels[a], labels[c]), float(M[a, c])
    else:
        pair, val = None, math.nan
    return {"labels": labels, "matrix": M, "adjacent_pair": pair, "adjacent_min": val}


def _segset_distance(A, B, k: int = 4) -> float:
    """Minimal torus distance between two segment sets given as (starts, ends)."""
    A0, A1 = A
    B0, B1 = B
    if len(A0) == 0 or len(B0) == 0:
        return math.inf
    reach = max(float(np.max(np.linalg.norm(A1 - A0, axis=1))), float(np.max(np.linalg.norm(B1 - B0, axis=1))))
    # exact crossing test through the wrapped spatial hash
    pairs = _segment_pairs(A0, A1, B0, B1, reach)
    if len(pairs):
        v = pairs[:, 2:].astype(float)
        hit, _, _ = segment_intersections(A0[pairs[:, 0]], A1[pairs[:, 0]], B0[pairs[:, 1]] + v, B1[pairs[:, 1]] + v)
        if np.any(hit):
            return 0.0
    # otherwise: each A segment against the B segments starting at its k nearest start vertices
    mids = reduce_array(0.5 * (A0 + A1))
    tree = cKDTree(reduce_array(0.5 * (B0 + B1)), boxsize=1.0)
    k = min(k, len(B0))
    _, nb = tree.query(mids, k=k)
    nb = nb.reshape(len(A0), -1)
    best = math.inf
    for col in range(nb.shape[1]):
        j = nb[:, col]
        shift = torus_delta(B0[j], A0) - (A0 - B0[j])
        d = _segment_distance(A0, A1, B0[j] - shift, B1[j] - shift)
        best = min(best, float(np.min(d)))
    # exactness: a pair at distance D has midpoints within D + reach, so every
    # A segment whose nearest B midpoint is closer than best + reach is rechecked in full
    dm, _ = tree.query(mids, k=1)
    todo = np.flatnonzero(dm < best + reach)
    if todo.size:
        near = cKDTree(mids[todo], boxsize=1.0).sparse_distance_matrix(tree, best + reach, output_type="ndarray")
        i, j = todo[near["i"]], near["j"]
        for lo in range(0, len(i), 1 << 20):
            a, b = i[lo : lo + (1 << 20)], j[lo : lo + (1 << 20)]
            shift = torus_delta(B0[b], A0[a]) - (A0[a] - B0[b])
            d = _segment_distance(A0[a], A1[a], B0[b] - shift, B1[b] - shift)
            best = min(best, float(np.min(d)))
    return best


def _segment_pairs(A0, A1, B0, B1, cell):
    """Candidate (i, j, vx, vy) for segment sets that need not form polylines."""
    nc = max(1, int(math.floor(1.0 / cell)))
    ka, ia, oa = _hash_entries(A0, A1, nc)
    kb, jb, ob = _hash_entries(B0, B1, nc)
    return _match_entries(ka, ia, oa, kb, jb, ob)


def first_return(f: LiftedMap, q, r: float, max_iter: int = 10_000):
    """Smallest j <= max_iter with F^j(q) within r of q on the torus; (None, None) if none."""
    if not r > 0:
        raise ValueError("return radius must be positive")
    q = np.asarray(q, float)
    z = q.copy()
    for j in range(1, max_iter + 1):
        z = f.evaluate(z)
        if float(np.linalg.norm(torus_delta(q, z))) < r:
            return j, reduce(z)
    return None, None
