import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from tanglekit import (
    BUILTIN_HAMILTONIANS,
    DoubleTwist,
    Identity,
    Translation,
    TwistProfile,
    compose,
    flux_across_curve,
    flux_vector,
    mean_rotation_vector,
    stroboscopic_map,
)
from tanglekit.flux import FluxError, circle_distance, wrap01
from tanglekit.torus import ClosedCurve, horizontal_loop, vertical_loop


def test_identity_flux_zero():
    for loop in (horizontal_loop(0.3), vertical_loop(0.7), ClosedCurve.from_points([(0, 0), (0.4, 0.3), (1, 1)])):
        assert flux_across_curve(Identity(), loop) == 0.0


def test_translation_strip():
    assert flux_across_curve(Translation(0.0, 0.37), horizontal_loop()) == pytest.approx(0.37, abs=1e-14)
    assert flux_across_curve(Translation(0.0, -0.2), horizontal_loop()) == pytest.approx(0.8, abs=1e-14)


def test_double_twist_flux_against_quadrature():
    q = TwistProfile(0.3, ((1, 0.0, 0.2), (2, 0.05, 0.0)))
    f = DoubleTwist(TwistProfile.sine(0.8), q)
    oracle, _ = quad(q, 0.0, 1.0, epsabs=1e-14)
    assert flux_across_curve(f, horizontal_loop()) == pytest.approx(oracle % 1, abs=1e-8)


def test_mean_rotation_examples():
    assert mean_rotation_vector(Identity(), 64).as_array() == pytest.approx([0, 0], abs=0)
    assert mean_rotation_vector(Translation(0.2, -0.1), 64).as_array() == pytest.approx([0.2, -0.1], abs=1e-12)
    p = TwistProfile(0.17, ((1, 0.1, 0.0),))
    q = TwistProfile(-0.05, ((1, 0.0, 0.12), (3, 0.02, 0.01)))
    f = DoubleTwist(p, q)
    oracle = [quad(p, 0, 1)[0], quad(q, 0, 1)[0]]
    assert mean_rotation_vector(f, 256).as_array() == pytest.approx(oracle, abs=1e-8)


def test_flux_vector_examples():
    assert flux_vector(Identity()).as_array().tolist() == [0.0, 0.0]
    fv = flux_vector(Translation(0.25, 0.125))
    assert (fv.phi_a, fv.phi_b) == pytest.approx((0.125, 0.25), abs=1e-14)
    assert fv.method_agreement
    fv = flux_vector(stroboscopic_map(BUILTIN_HAMILTONIANS["cos_product"], 256))
    assert circle_distance(fv.phi_a, 0) < 1e-6 and circle_distance(fv.phi_b, 0) < 1e-6


def test_wrap_band():
    assert wrap01(1.0 - 1e-12) == 0.0
    assert wrap01(-0.25) == 0.75


def test_duality_violation_raises():
    class Broken(Translation):
        def evaluate(self, z):
            # a lift that is not equivariant breaks the area / displacement duality
            w = super().evaluate(z)
            w[..., 1] += 0.01 * np.sin(2 * np.pi * z[..., 0] * 0.5) ** 2
            return w

    with pytest.raises(FluxError):
        flux_vector(Broken(0.0, 0.0))


means = st.floats(-2, 2)
amps = st.floats(-1.2, 1.2)


@given(amps, amps, means, means, means, means)
def test_composition_additivity(K1, L1, p1, q1, p2, q2):
    f = DoubleTwist.standard(K1, L1, p1, q1)
    h = DoubleTwist.standard(0.5, -0.3, p2, q2)
    lhs = flux_vector(compose(f, h)).as_array()
    rhs = flux_vector(f).as_array() + flux_vector(h).as_array()
    assert np.all(circle_distance(lhs, rhs) < 1e-6)


@given(amps, amps, means, means, st.floats(-0.2, 0.2), st.floats(0, 1))
def test_homology_invariance_wavy(K, L, pm, qm, amp, y0):
    f = DoubleTwist.standard(K, L, pm, qm)
    x = np.linspace(0, 1, 65)
    wavy = ClosedCurve(np.column_stack([x, y0 + amp * np.sin(2 * np.pi * x)]), (1, 0))
    assert circle_distance(flux_across_curve(f, wavy), flux_across_curve(f, horizontal_loop())) < 1e-6
