from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tanglekit import DoubleTwist, Translation, compose, flux_vector
from tanglekit.flux import circle_distance
from tanglekit.perturbations import (
    BumpProfile,
    NudgeSpec,
    TunerSpec,
    flux_tuner,
    local_nudge,
    nearest_rational,
    rationalize_flux,
)
from tanglekit.torus import TorusPoint


def bump_integral_oracle(delta):
    mpmath.mp.dps = 30
    val = mpmath.quad(lambda t: mpmath.exp(1 - 1 / (1 - (t / delta) ** 2)), [-delta, 0, delta])
    return float(val)


@pytest.mark.parametrize("delta", [0.05, 0.1, 0.3])
def test_bump_integral(delta):
    assert BumpProfile(delta).integral == pytest.approx(bump_integral_oracle(delta), rel=1e-12)


def test_zero_epsilon_is_identity(rng):
    h = flux_tuner(TunerSpec("b", 0.0, BumpProfile(0.1)))
    Z = rng.random((100, 2))
    assert np.array_equal(h.evaluate(Z), Z)


@pytest.mark.parametrize("eps", [0.003, 0.07, 0.4])
def test_tuner_flux(eps):
    h = flux_tuner(TunerSpec("b", eps, BumpProfile(0.1), 0.35))
    fv = flux_vector(h)
    assert circle_distance(fv.phi_a, eps * bump_integral_oracle(0.1)) < 1e-8
    assert circle_distance(fv.phi_b, 0.0) < 1e-10
    g = flux_tuner(TunerSpec("a", eps, BumpProfile(0.1), 0.6))
    fv = flux_vector(g)
    assert circle_distance(fv.phi_b, eps * bump_integral_oracle(0.1)) < 1e-8
    assert circle_distance(fv.phi_a, 0.0) < 1e-10


def test_tube_too_wide():
    with pytest.raises(ValueError, match="tube too wide"):
        TunerSpec("a", 0.1, BumpProfile(0.5))


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-1, 1), st.floats(0, 1))
def test_tuner_support_bitwise(x, y, eps, c):
    h = flux_tuner(TunerSpec("b", eps, BumpProfile(0.1), c))
    z = np.array([x, y])
    d = abs((x - c + 0.5) % 1.0 - 0.5)
    if d >= 0.1:
        assert np.array_equal(h.evaluate(z), z)


def nearest_rational_oracle(v, Q):
    best = None
    for q in range(1, Q + 1):
        for p in range(q + 1):
            fr = Fraction(p, q)
            d = float(circle_distance(v, float(fr)))
            if best is None or d < best[0] - 1e-15:
                best = (d, fr)
    return best[1] % 1


@given(st.floats(0, 1, exclude_max=True), st.integers(1, 12))
def test_nearest_rational_oracle(v, Q):
    got = nearest_rational(v, Q)
    oracle = nearest_rational_oracle(v, Q)
    assert got.denominator <= Q
    assert circle_distance(v, float(got)) == pytest.approx(float(circle_distance(v, float(oracle))), abs=1e-15)


def test_rationalize_zero_flux_unchanged(twist):
    g, fv = rationalize_flux(twist, 5)
    assert g is twist
    assert circle_distance(fv.phi_a, 0) < 1e-12 and circle_distance(fv.phi_b, 0) < 1e-12


def test_rationalize_translation():
    f = Translation(0.26, 0.49)
    g, fv = rationalize_flux(f, 4)
    assert circle_distance(fv.phi_a, 0.5) < 1e-6
    assert circle_distance(fv.phi_b, 0.25) < 1e-6


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0, 1), st.floats(0, 1), st.floats(-0.3, 0.3))
def test_tuner_additivity(K, L, pm, qm, eps):
    f = DoubleTwist.standard(K, L, pm, qm)
    h = flux_tuner(TunerSpec("b", eps, BumpProfile(0.1), 0.2))
    lhs = flux_vector(compose(f, h)).as_array() - flux_vector(f).as_array()
    assert np.all(circle_distance(lhs, flux_vector(h).as_array()) < 1e-6)


def nudge(center=(0.4, 0.6), v=(0.012, -0.016), delta=0.1, steps=64):
    c = TorusPoint(*center)
    return local_nudge(NudgeSpec(c, TorusPoint(c.x + v[0], c.y + v[1]), delta), steps)


def test_trivial_nudge_is_identity(rng):
    m = nudge(v=(0.0, 0.0))
    Z = 0.4 + 0.2 * (rng.random((50, 2)) - 0.5)
    assert np.array_equal(m.evaluate(Z), Z)


def test_nudge_contract(rng):
    m = nudge()
    assert np.allclose(m((0.4, 0.6)), (0.412, 0.584), atol=1e-10)
    # annulus and far points
    ang = rng.random(200) * 2 * np.pi
    rad = 0.1 + rng.random(200) * 0.4
    far = np.array([0.4, 0.6]) + rad[:, None] * np.column_stack([np.cos(ang), np.sin(ang)])
    assert np.array_equal(m.evaluate(far), far)
    # halving the step count leaves the core translation unchanged (constant field)
    assert np.allclose(nudge(steps=32)((0.4, 0.6)), m((0.4, 0.6)), atol=1e-12)


def test_nudge_jacobian(rng):
    m = nudge()
    ang = rng.random(100) * 2 * np.pi
    rad = rng.random(100) * 0.1
    Z = np.array([0.4, 0.6]) + rad[:, None] * np.column_stack([np.cos(ang), np.sin(ang)])
    assert np.max(np.abs(np.linalg.det(m.jacobian(Z)) - 1)) < 1e-8
    h = 1e-6
    fd = np.stack([(m.evaluate(Z + h * e) - m.evaluate(Z - h * e)) / (2 * h) for e in np.eye(2)], axis=-1)
    assert np.allclose(fd, m.jacobian(Z), atol=1e-5)


def test_nudge_displacement_too_large():
    with pytest.raises(ValueError, match="displacement too large for the core"):
        nudge(v=(0.06, 0.0))


def test_nudge_wraps_around_torus():
    m = nudge(center=(0.98, 0.01), v=(0.02, 0.01))
    assert np.allclose(m((0.98, 0.01)), (1.0, 0.02), atol=1e-10)
    assert np.allclose(m((-0.02, 1.01)), (0.0, 1.02), atol=1e-10)
