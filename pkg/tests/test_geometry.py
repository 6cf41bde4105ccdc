import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from craneswing.errors import (
    DomainError,
    InvalidIntrinsicsError,
    InvalidValidationInputError,
    OutOfViewError,
    UndefinedThetaError,
)
from craneswing.geometry import (
    CameraIntrinsics,
    ImagePoint,
    ValidationInput,
    cos_viewing_angle,
    estimate_alpha,
    focal_length_px,
    project_m,
    project_state,
    theta_from_state,
    validation_alpha,
    wrap_angle,
)
from craneswing.simulator import grab_scene

from . import oracles

deg = math.radians
small_angle = st.floats(0.0, deg(20.0))
azimuth = st.floats(0.0, 2 * math.pi, exclude_max=True)
focal = st.floats(500.0, 5000.0)


class TestFocalLength:
    def test_target_pixel_density(self):
        # sensor diagonal chosen so d0 is exactly 342.67 px/mm
        diag = math.hypot(1920, 1080) / 342.67
        assert focal_length_px(CameraIntrinsics(4.8, diag, 1920, 1080)) == pytest.approx(1644.82, abs=0.01)

    def test_identity_conversion(self):
        assert focal_length_px(CameraIntrinsics(1.0, 5.0, 3, 4)) == pytest.approx(1.0, abs=1e-15)

    def test_uhd_recomputed(self):
        expected = 4.8 * math.sqrt(3840**2 + 2160**2) / 6.43
        assert expected == pytest.approx(3288.9438309160287, rel=1e-15)
        assert focal_length_px(CameraIntrinsics(4.8, 6.43, 3840, 2160)) == pytest.approx(expected, abs=1e-9)

    @pytest.mark.parametrize(
        "args", [(0.0, 6.43, 1920, 1080), (4.8, -1.0, 1920, 1080), (4.8, 6.43, 0, 1080), (4.8, 6.43, 1920, float("nan"))]
    )
    def test_rejects_nonpositive(self, args):
        with pytest.raises(InvalidIntrinsicsError):
            CameraIntrinsics(*args)


class TestCosViewingAngle:
    def test_aligned_axes(self):
        assert cos_viewing_angle(0.0, 0.0, 1.234) == 1.0

    def test_payload_on_principal_axis(self):
        assert cos_viewing_angle(deg(5), deg(5), 0.0) == pytest.approx(1.0, abs=1e-15)

    def test_perpendicular_azimuth(self):
        got = cos_viewing_angle(deg(2), deg(5), math.pi / 2)
        assert got == pytest.approx(math.cos(deg(2)) * math.cos(deg(5)), abs=1e-15)
        assert got == pytest.approx(oracles.dot_cos(deg(2), deg(5), math.pi / 2), abs=1e-15)

    def test_vectorised(self):
        a = np.array([0.0, deg(3), deg(10)])
        out = cos_viewing_angle(a, deg(5), 1.0)
        assert out.shape == (3,)
        for ai, oi in zip(a, out):
            assert oi == pytest.approx(oracles.dot_cos(ai, deg(5), 1.0), abs=1e-15)


class TestProjectM:
    def test_on_axis(self):
        assert project_m(0.0, 0.0, 0.7, 1600) == 0.0

    def test_ideal_camera_45_degrees(self):
        assert project_m(deg(45), 0.0, 2.0, 1600) == pytest.approx(1600.0, rel=1e-14)

    def test_law_of_cosines_residual(self):
        a, b, g, h = deg(2), deg(5), 1.3, 1600.0
        m = project_m(a, b, g, h)
        c = cos_viewing_angle(a, b, g)
        assert abs((m**2 + h**2) * c**2 - h**2) < 1e-9 * h**2

    def test_behind_camera(self):
        with pytest.raises(OutOfViewError):
            project_m(deg(60), deg(40), math.pi, 1600)

    def test_bad_focal(self):
        with pytest.raises(InvalidIntrinsicsError):
            project_m(0.1, 0.1, 0.1, 0.0)


class TestThetaFromState:
    def test_round_trip_through_estimate(self):
        a, b, g, h = deg(2), deg(5), 2.1, 1600.0
        m = project_m(a, b, g, h)
        cos_t = theta_from_state(a, b, m, h)
        assert estimate_alpha(m, math.acos(cos_t), b, h) == pytest.approx(a, abs=1e-12)

    def test_swing_away_from_camera_tilt(self):
        # A' lies on the ray from C' through G', so theta = 0
        a, b, h = deg(2), deg(5), 1600.0
        m = project_m(a, b, math.pi, h)
        m_ref, cos_ref, _ = oracles.project(a, b, math.pi, h)
        assert m == pytest.approx(m_ref, rel=1e-12)
        assert cos_ref == pytest.approx(1.0, abs=1e-9)
        assert theta_from_state(a, b, m, h) == pytest.approx(cos_ref, abs=1e-9)

    def test_swing_past_principal_point(self):
        a, b, h = deg(8), deg(5), 1600.0
        m = project_m(a, b, 0.0, h)
        assert theta_from_state(a, b, m, h) == pytest.approx(-1.0, abs=1e-9)
        assert oracles.project(a, b, 0.0, h)[1] == pytest.approx(-1.0, abs=1e-9)

    def test_near_coplanar_matches_oracle(self):
        a = b = deg(5)
        for g in (1e-2, 1e-3):
            m = project_m(a, b, g, 1600)
            assert theta_from_state(a, b, m, 1600) == pytest.approx(oracles.project(a, b, g, 1600)[1], abs=1e-6)

    def test_exactly_coplanar_uses_convention(self):
        m, theta = project_state(deg(5), deg(5), 0.0, 1600.0)
        assert m == pytest.approx(0.0, abs=1e-12)
        assert ImagePoint(0.0, 1.0).theta == 0.0

    @pytest.mark.parametrize("m,beta", [(0.0, deg(5)), (10.0, 0.0)])
    def test_undefined(self, m, beta):
        with pytest.raises(UndefinedThetaError):
            theta_from_state(deg(2), beta, m, 1600)


class TestEstimateAlpha:
    def test_ideal_case(self):
        assert math.degrees(estimate_alpha(1600, 0.3, 0.0, 1600)) == pytest.approx(45.0, abs=1e-12)

    def test_principal_point_returns_beta_exactly(self):
        assert estimate_alpha(0.0, 0.0, deg(5), 1600) == deg(5)

    def test_matches_literal_arccos(self):
        rng = np.random.default_rng(3)
        m = rng.uniform(0, 800, 500)
        t = rng.uniform(-math.pi, math.pi, 500)
        b = rng.uniform(0, deg(20), 500)
        h = 1600.0
        literal = np.arccos(np.clip((m * np.sin(b) * np.cos(t) + h * np.cos(b)) / np.hypot(m, h), -1, 1))
        np.testing.assert_allclose(estimate_alpha(m, t, b, h), literal, atol=1e-7)
        # away from tiny angles the arccos form is itself accurate
        big = literal > 1e-3
        np.testing.assert_allclose(estimate_alpha(m, t, b, h)[big], literal[big], atol=1e-12)

    def test_round_trip_1000_random(self):
        rng = np.random.default_rng(20240601)
        a = rng.uniform(0, deg(20), 1000)
        b = rng.uniform(0, deg(20), 1000)
        g = rng.uniform(0, 2 * math.pi, 1000)
        m, theta = project_state(a, b, g, 1600.0)
        np.testing.assert_allclose(estimate_alpha(m, theta, b, 1600.0), a, atol=1e-9, rtol=0)

    def test_errors(self):
        with pytest.raises(InvalidIntrinsicsError):
            estimate_alpha(10.0, 0.0, 0.1, -1.0)
        with pytest.raises(DomainError):
            estimate_alpha(-1.0, 0.0, 0.1, 1600.0)

    @given(st.floats(0.0, 5000.0), st.floats(-math.pi, math.pi), focal)
    def test_beta_zero_is_arctan_and_theta_free(self, m, theta, h):
        got = estimate_alpha(m, theta, 0.0, h)
        assert got == pytest.approx(math.atan(m / h), abs=1e-14)
        assert got == pytest.approx(estimate_alpha(m, 0.0, 0.0, h), abs=1e-15)

    @given(st.floats(0.0, 5000.0), st.floats(0.001, 100.0), focal)
    def test_monotone_in_m_at_beta_zero(self, m, dm, h):
        assert estimate_alpha(m + dm, 1.0, 0.0, h) > estimate_alpha(m, 1.0, 0.0, h)


@settings(max_examples=300)
@given(small_angle, small_angle, azimuth, focal)
def test_round_trip_property(a, b, g, h):
    m, theta = project_state(a, b, g, h)
    assert abs(estimate_alpha(m, theta, b, h) - a) < 1e-9


@settings(max_examples=300)
@given(small_angle, small_angle, azimuth, focal)
def test_law_of_cosines_property(a, b, g, h):
    m = project_m(a, b, g, h)
    c = cos_viewing_angle(a, b, g)
    assert abs((m * m + h * h) * c * c - h * h) <= 1e-6 * h * h


def test_brute_force_vectors_agree():
    rng = np.random.default_rng(77)
    worst_m = worst_cos = 0.0
    for _ in range(1000):
        a, b = rng.uniform(0, deg(20), 2)
        b = max(b, 1e-3)
        g = rng.uniform(0, 2 * math.pi)
        h = rng.uniform(500, 5000)
        m_ref, cos_ref, theta_ref = oracles.project(a, b, g, h)
        m = project_m(a, b, g, h)
        worst_m = max(worst_m, abs(m - m_ref))
        if m_ref > 1.0:
            worst_cos = max(worst_cos, abs(theta_from_state(a, b, m, h) - cos_ref))
            _, theta = project_state(a, b, g, h)
            assert math.copysign(1, theta) == math.copysign(1, theta_ref) or abs(theta_ref) < 1e-9
    assert worst_m < 1e-9
    assert worst_cos < 1e-9


def test_project_state_beta_zero_limit():
    m, theta = project_state(deg(3), 0.0, 1.0, 1600.0)
    assert theta == pytest.approx(wrap_angle(math.pi - 1.0))
    assert m == pytest.approx(1600 * math.tan(deg(3)))


class TestValidationAlpha:
    def test_centered_grab(self):
        assert validation_alpha(ValidationInput(0.0, 141.0, 2.9, 20.0)) == 0.0

    def test_ratio_invariance(self):
        one = validation_alpha(30.0, 141.0, 2.9, 20.0)
        assert validation_alpha(60.0, 282.0, 2.9, 20.0) == pytest.approx(one, abs=1e-15)
        assert validation_alpha(30.0, 141.0, 5.8, 40.0) == pytest.approx(one, abs=1e-15)

    def test_synthetic_scene_recovers_swing(self):
        for orientation in ("level", "rope_normal"):
            m, _, x = grab_scene(deg(3), 0.0, 0.4, 20.0, 2.9, 1600.0, orientation)
            assert abs(validation_alpha(float(m), float(x), 2.9, 20.0) - deg(3)) < deg(0.1)

    def test_level_grab_is_exact(self):
        m, _, x = grab_scene(deg(7), 0.0, 2.0, 15.0, 2.9, 1600.0, "level")
        assert validation_alpha(float(m), float(x), 2.9, 15.0) == pytest.approx(deg(7), abs=1e-12)

    def test_independent_of_focal_length(self):
        m1, _, x1 = grab_scene(deg(4), 0.0, 1.0, 20.0, 2.9, 1600.0, "rope_normal")
        m2, _, x2 = grab_scene(deg(4), 0.0, 1.0, 20.0, 2.9, 3200.0, "rope_normal")
        assert validation_alpha(m1, x1, 2.9, 20.0) == pytest.approx(validation_alpha(m2, x2, 2.9, 20.0), abs=1e-13)

    def test_arcsin_domain(self):
        with pytest.raises(InvalidValidationInputError):
            validation_alpha(1000.0, 10.0, 2.9, 20.0)

    @pytest.mark.parametrize("x,b,l", [(0.0, 2.9, 20.0), (141.0, -1.0, 20.0), (141.0, 2.9, 0.0)])
    def test_domain(self, x, b, l):
        with pytest.raises(DomainError):
            validation_alpha(10.0, x, b, l)


@settings(max_examples=300)
@given(small_angle, st.floats(deg(0.5), deg(20.0)), azimuth, focal)
def test_project_state_theta_agrees_with_closed_form(a, b, g, h):
    m, theta = project_state(a, b, g, h)
    if m > 1.0:
        assert abs(math.cos(theta) - theta_from_state(a, b, m, h)) < 1e-9
