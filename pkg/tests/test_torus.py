import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tanglekit.torus import (
    ClosedCurve,
    GeometryError,
    LatticeVector,
    curve_class,
    curve_from_csv,
    curve_to_csv,
    horizontal_loop,
    intersection_number,
    polyline_crossing_count,
    reduce,
    signed_area,
    vertical_loop,
)

coord = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
small_int = st.integers(-5, 5)


@pytest.mark.parametrize(
    "p, expected",
    [((0.25, 0.75), (0.25, 0.75)), ((1.25, -0.25), (0.25, 0.75)), ((3.0, -2.0), (0.0, 0.0))],
)
def test_reduce_examples(p, expected):
    assert reduce(p) == pytest.approx(expected, abs=1e-15)


def test_reduce_rejects_nonfinite():
    with pytest.raises(GeometryError):
        reduce((np.nan, 0.0))


@given(coord, coord, small_int, small_int)
def test_reduce_idempotent_and_lattice_invariant(x, y, m, n):
    r = reduce((x, y))
    assert reduce(r) == r
    assert 0.0 <= r.x < 1.0 and 0.0 <= r.y < 1.0
    shifted = reduce((x + m, y + n))
    # adding an integer may round the last bit; compare on the circle
    d = np.abs(np.array(shifted) - np.array(r))
    assert np.all(np.minimum(d, 1 - d) < 1e-12)


def test_curve_class_examples():
    assert curve_class(ClosedCurve.from_points([(0, 0), (1, 0)])) == LatticeVector(1, 0)
    assert curve_class(ClosedCurve.from_points([(0, 0), (0.5, 0.5), (0, 0)])) == LatticeVector(0, 0)
    assert curve_class(ClosedCurve.from_points([(0, 0), (2, 3)])) == LatticeVector(2, 3)


def test_curve_rejects_class_mismatch():
    with pytest.raises(GeometryError):
        ClosedCurve(np.array([[0.0, 0.0], [1.0, 0.0]]), LatticeVector(0, 1))


SQUARE = [(0, 0), (0.5, 0), (0.5, 0.5), (0, 0.5), (0, 0)]


def test_signed_area_examples():
    c = ClosedCurve.from_points(SQUARE)
    assert signed_area(c) == pytest.approx(0.25, abs=1e-15)
    assert signed_area(c.reversed()) == pytest.approx(-0.25, abs=1e-15)
    assert signed_area(ClosedCurve.from_points([(0, 0), (0.3, 0.1), (0, 0)])) == 0.0


@st.composite
def polygons(draw):
    n = draw(st.integers(3, 9))
    pts = draw(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=n, max_size=n, unique=True))
    return np.array(pts + [pts[0]])


@given(polygons(), st.integers(0, 8))
def test_signed_area_relabel_and_reverse(P, shift):
    body = P[:-1]
    k = shift % len(body)
    rolled = np.roll(body, -k, axis=0)
    a = signed_area(ClosedCurve(P, LatticeVector(0, 0)))
    b = signed_area(ClosedCurve(np.vstack([rolled, rolled[:1]]), LatticeVector(0, 0)))
    c = signed_area(ClosedCurve(P[::-1].copy(), LatticeVector(0, 0)))
    assert b == pytest.approx(a, abs=1e-12)
    assert c == pytest.approx(-a, abs=1e-12)


def test_intersection_number_examples():
    a = horizontal_loop(0.1)
    b = vertical_loop(0.2)
    assert intersection_number(a, b) == 1
    wavy = ClosedCurve.from_points([(0, 0.4), (0.3, 0.7), (0.6, 0.2), (1, 0.4)])
    assert intersection_number(a, wavy) == 0
    c21 = ClosedCurve.from_points([(0.05, 0.13), (2.05, 1.13)])
    c11 = ClosedCurve.from_points([(0.31, 0.02), (1.31, 1.02)])
    assert intersection_number(c21, c11) == 1


def random_loop(rng, klass, n=6, wiggle=0.3):
    """Polyline of the given class: a straight lift plus a random closed perturbation."""
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    start = rng.random(2)
    pts = start + t * np.array(klass, float)
    noise = wiggle * (rng.random((n + 1, 2)) - 0.5)
    noise[-1] = noise[0]
    return ClosedCurve(pts + noise, LatticeVector(*klass))


def test_intersection_number_antisymmetric(rng):
    for _ in range(10):
        k1 = tuple(rng.integers(-2, 3, 2))
        k2 = tuple(rng.integers(-2, 3, 2))
        if k1 == (0, 0) or k2 == (0, 0):
            continue
        c1, c2 = random_loop(rng, k1), random_loop(rng, k2)
        assert intersection_number(c1, c2) == -intersection_number(c2, c1)


def test_exact_touch_resolved_deterministically():
    # the vertical loop passes exactly through a vertex of the horizontal one
    a = ClosedCurve.from_points([(0, 0.5), (0.5, 0.5), (1, 0.5)])
    b = ClosedCurve.from_points([(0.5, 0), (0.5, 1)])
    count, touching = polyline_crossing_count(a, b)
    assert touching
    assert intersection_number(a, b) == 1


def test_curve_csv_roundtrip():
    c = ClosedCurve.from_points([(0.1, 0.2), (0.4, 0.9), (1.1, 0.2)])
    back = curve_from_csv(curve_to_csv(c))
    assert back.cls == c.cls
    assert np.array_equal(back.vertices, c.vertices)
