import math
from fractions import Fraction

import numpy as np
import pytest

from tanglekit import (
    GrowthSettings,
    Translation,
    WedgeRegion,
    accumulation_report,
    find_crossings,
    first_return,
    grow_branch,
    wedge_entries,
)
from tanglekit.manifolds import ManifoldBranch
from tanglekit.tangle import polyline_distance, segment_intersections
from tanglekit.torus import torus_delta

from test_manifolds import LinearSaddle


def synthetic(saddle, points, kind="unstable"):
    P = np.asarray(points, float)
    arclen = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(P, axis=0), axis=1))])
    return ManifoldBranch(saddle, kind, 1, P, arclen, np.arange(len(P), dtype=float), GrowthSettings(), 1, 2.6, (1.0, 0.0))


def brute_force_crossings(U, S):
    """All segment pairs, each at the lattice offset that brings the stable segment next to the unstable one."""
    out = []
    S0, S1 = S[:-1], S[1:]
    for i in range(len(U) - 1):
        v = np.round(U[i] - S0)
        hit, t, _ = segment_intersections(U[i], U[i + 1], S0 + v, S1 + v)
        for j in np.flatnonzero(hit):
            out.append(U[i] + t[j] * (U[i + 1] - U[i]))
    return np.array(out).reshape(-1, 2)


def test_disjoint_segments(saddle):
    bu = synthetic(saddle, [(0.1, 0.1), (0.2, 0.1), (0.3, 0.1)])
    bs = synthetic(saddle, [(0.1, 0.4), (0.2, 0.4), (0.3, 0.4)], "stable")
    assert len(find_crossings(bu, bs, 1e-3)) == 0


def test_right_angle_crossing(saddle):
    bu = synthetic(saddle, [(0.2, 0.3), (0.3, 0.3), (0.4, 0.3)])
    bs = synthetic(saddle, [(1.3, 2.1), (1.3, 2.2), (1.3, 2.4)], "stable")
    rep = find_crossings(bu, bs, 1e-3)
    assert len(rep) == 1
    c = rep[0]
    assert c.point == pytest.approx((0.3, 0.3), abs=1e-14)
    assert c.angle == pytest.approx(math.pi / 2, abs=1e-14)
    assert c.offset == (-1, -2)


def test_matches_brute_force_short(twist, saddle):
    st = GrowthSettings(L_max=3.0)
    bu = grow_branch(saddle, "unstable", 1, st, twist)
    bs = grow_branch(saddle, "stable", 1, st, twist)
    rep = find_crossings(bu, bs, 1e-3)
    oracle = brute_force_crossings(bu.polyline, bs.polyline)
    far = np.linalg.norm(torus_delta(saddle.base_array(), oracle), axis=1) >= 1e-3
    oracle = oracle[far]
    assert len(rep) + len(rep.suspects) == len(oracle) > 0
    got = np.array([c.lift_point for c in list(rep) + rep.suspects])
    for p in oracle:
        assert np.min(np.linalg.norm(got - p, axis=1)) < 1e-12


def test_crossings_reverify(twist, branches30):
    bu, bs = branches30[("unstable", 1)], branches30[("stable", 1)]
    rep = find_crossings(bu, bs, 1e-3, f=twist)
    assert len(rep) > 0
    sample = rep.crossings[:: max(1, len(rep) // 200)]
    pts = np.array([c.point for c in sample])
    assert np.max(polyline_distance(pts, bu.polyline)) < 1e-9
    assert np.max(polyline_distance(pts, bs.polyline)) < 1e-9
    U, S = bu.polyline, bs.polyline
    for c in sample:
        r = U[c.u_segment + 1] - U[c.u_segment]
        s = S[c.s_segment + 1] - S[c.s_segment]
        ang = math.acos(min(1.0, abs(r @ s) / (np.linalg.norm(r) * np.linalg.norm(s))))
        assert abs(ang - c.angle) < 1e-8
    u = np.array([c.u_param for c in rep])
    assert np.all(np.diff(u) >= 0)


def test_swap_roles(twist, saddle):
    st = GrowthSettings(L_max=4.0)
    bu = grow_branch(saddle, "unstable", 1, st, twist)
    bs = grow_branch(saddle, "stable", 1, st, twist)
    a = find_crossings(bu, bs, 1e-3)
    b = find_crossings(bs, bu, 1e-3)
    ka = sorted((round(c.u_param, 10), round(c.s_param, 10), c.orient) for c in a)
    kb = sorted((round(c.s_param, 10), round(c.u_param, 10), -c.orient) for c in b)
    assert ka == kb


def test_wedge_empty_on_axis():
    f = LinearSaddle()
    from tanglekit.orbits import PeriodicOrbit, classify
    from tanglekit.torus import LatticeVector, TorusPoint

    o = classify(PeriodicOrbit(TorusPoint(0.0, 0.0), 1, LatticeVector(0, 0)), f)
    b = grow_branch(o, "unstable", 1, GrowthSettings(L_max=0.3), f)
    assert len(wedge_entries(b, WedgeRegion.at_orbit(o, 0.05, 0.01), f=f)) == 0


def test_wedge_sequence_structure(twist, saddle):
    b = grow_branch(saddle, "unstable", 1, GrowthSettings(L_max=30.0), twist)
    w = WedgeRegion.at_orbit(saddle, 0.05, 0.01)
    seq = wedge_entries(b, w, f=twist)
    assert len(seq) > 0
    assert np.all(np.diff([e.arclen for e in seq]) > 0)
    for e in seq:
        assert e.chart[1] == pytest.approx(0.05, abs=1e-9)
        assert 0 <= e.chart[0] <= 0.01
    cls = seq[0].lattice_class
    filtered = wedge_entries(b, w, cls, f=twist)
    assert len(filtered) > 0 and all(e.lattice_class == cls for e in filtered)
    with pytest.raises(ValueError):
        WedgeRegion.at_orbit(saddle, 0.01, 0.05)


def test_accumulation_report(twist, branches30):
    rep = accumulation_report(branches30, 0.05)
    M = rep["matrix"]
    assert np.allclose(M, M.T, atol=1e-12)
    assert np.all(np.diag(M) == 0)
    assert rep["adjacent_min"] < 1e-2


def brute_force_segset_distance(P, Q):
    """Minimal distance over all segment pairs, each pair compared at its nearest lattice image."""
    from tanglekit.tangle import _segment_distance

    best = math.inf
    Q0, Q1 = Q[:-1], Q[1:]
    for lo in range(0, len(P) - 1, 64):
        A0 = P[lo : min(lo + 64, len(P) - 1)][:, None]
        A1 = P[lo + 1 : min(lo + 65, len(P))][:, None]
        shift = torus_delta(Q0, A0) - (A0 - Q0)
        best = min(best, float(np.min(_segment_distance(A0, A1, Q0 - shift, Q1 - shift))))
    return best


def test_accumulation_matches_brute_force(twist, saddle):
    st = GrowthSettings(L_max=0.8)
    br = {(k, s): grow_branch(saddle, k, s, st, twist) for k in ("unstable", "stable") for s in (1, -1)}
    rep = accumulation_report(br, 0.05)
    base = saddle.base_array()

    def outside(P):
        keep = np.linalg.norm(torus_delta(base, P), axis=1) >= 0.05
        # the branches leave the ball once, so the kept vertices form one polyline
        return P[keep]

    keys = [("unstable", 1), ("unstable", -1), ("stable", 1), ("stable", -1)]
    for a, c in [(0, 1), (0, 2), (1, 3), (2, 3)]:
        oracle = brute_force_segset_distance(outside(br[keys[a]].polyline), outside(br[keys[c]].polyline))
        assert rep["matrix"][a, c] == pytest.approx(oracle, abs=1e-12)


def convergent_denominators(x, n=12):
    q_prev, q = 0, 1
    out = [1]
    frac = Fraction(x)
    a0 = math.floor(frac)
    frac -= a0
    for _ in range(n):
        if frac == 0:
            break
        frac = 1 / frac
        a = math.floor(frac)
        frac -= a
        q_prev, q = q, a * q + q_prev
        out.append(q)
    return out


def test_first_return_examples(twist):
    j, _ = first_return(Translation(0.5, 0.0), (0.0, 0.0), 0.1)
    assert j == 2
    j, p = first_return(twist, (0.0, 0.0), 0.1)
    assert j == 1
    alpha = math.sqrt(2) - 1
    j, _ = first_return(Translation(alpha, 0.0), (0.0, 0.0), 0.05)
    oracle = next(q for q in convergent_denominators(alpha) if abs(q * alpha - round(q * alpha)) < 0.05)
    assert j == oracle == 12
    assert first_return(Translation(alpha, 0.0), (0.0, 0.0), 1e-9, max_iter=50) == (None, None)
