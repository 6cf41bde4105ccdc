import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from craneswing.calibration import (
    CalibrationConfig,
    ModelParams,
    calibrate,
    iterate_once,
    swing_angles,
)
from craneswing.errors import CalibrationInfeasibleError, ConfigError, InsufficientDataError
from craneswing.geometry import ImagePoint
from craneswing.simulator import draw_sample, make_rng

deg = math.radians
H = 1600.0


def sample(n, beta=deg(5), sigma=deg(2), seed=11, h=H):
    return draw_sample(beta, sigma, h, n, make_rng(seed, 0, 0))


@pytest.fixture(scope="module")
def s10k():
    return sample(10_000)


@pytest.fixture(scope="module")
def fit10k(s10k):
    return calibrate(s10k.observations, H)


class TestIterateOnce:
    def test_principal_point_frames(self):
        obs = [ImagePoint(0.0)] * 5
        with pytest.raises(CalibrationInfeasibleError) as exc:
            iterate_once(obs, H, deg(3))
        assert exc.value.details["value"] > 1.0
        params, alphas = iterate_once(obs, H, deg(3), clamp_infeasible=True)
        np.testing.assert_array_equal(alphas, np.full(5, deg(3)))
        assert params.sigma_sq == pytest.approx(deg(3) ** 2, rel=1e-15)
        assert params.beta == 0.0

    def test_principal_point_from_zero_is_fixed_point(self):
        params, alphas = iterate_once([ImagePoint(0.0)] * 3, H, 0.0)
        assert (params.beta, params.sigma_sq) == (0.0, 0.0)
        assert not alphas.any()

    def test_first_step_golden(self):
        # seeded first moment step from beta=0; the step is small, most of the
        # way to 5 degrees is covered by later iterations
        s = draw_sample(deg(5), deg(2), H, 100_000, make_rng(2024, 0, 0))
        params, alphas = iterate_once(s.observations, H, 0.0)
        assert params.beta == pytest.approx(0.003348070299445376, abs=1e-12)
        assert params.sigma_sq == pytest.approx(0.008825349293195912, abs=1e-12)
        assert alphas.shape == (100_000,)

    def test_accepts_model_params(self, s10k):
        a, _ = iterate_once(s10k.observations, H, ModelParams(deg(4), 0.001))
        b, _ = iterate_once(s10k.observations, H, deg(4))
        assert a == b

    def test_formulas_literal(self, s10k):
        m, theta = s10k.observations
        beta = deg(4)
        params, alphas = iterate_once(s10k.observations, H, beta)
        r = np.hypot(m, H)
        lit = np.arccos(np.clip((m * math.sin(beta) * np.cos(theta) + H * math.cos(beta)) / r, -1, 1))
        np.testing.assert_allclose(alphas, lit, atol=1e-7)
        assert params.sigma_sq == pytest.approx(np.mean(alphas**2), rel=1e-15)
        assert params.beta == pytest.approx(math.acos(np.mean(H / r) * math.exp(params.sigma_sq / 2)), abs=1e-15)

    def test_empty(self):
        with pytest.raises(InsufficientDataError):
            iterate_once([], H, 0.0)

    def test_bad_h(self, s10k):
        from craneswing.errors import InvalidIntrinsicsError

        with pytest.raises(InvalidIntrinsicsError):
            iterate_once(s10k.observations, 0.0, 0.0)


class TestCalibrate:
    def test_converges_within_ten(self, fit10k):
        assert fit10k.converged
        assert fit10k.iterations <= 10
        assert all(d < 1e-6 for d in fit10k.final_deltas)

    def test_estimates_near_truth(self, fit10k):
        assert math.degrees(fit10k.params.beta) == pytest.approx(5.0, abs=0.3)
        assert math.degrees(fit10k.params.sigma) == pytest.approx(2.0, abs=0.1)

    def test_trace_shape(self, fit10k):
        assert len(fit10k.trace) == fit10k.iterations + 1
        assert fit10k.trace[0][0] == 0.0
        assert fit10k.trace[-1] == (fit10k.params.beta, fit10k.params.sigma_sq)
        be, se = fit10k.convergence_errors()
        assert be[-1] == 0.0 and se[-1] == 0.0
        assert (be >= 0).all() and (se >= 0).all()

    def test_self_consistent_fixed_point(self, s10k, fit10k):
        nxt, _ = iterate_once(s10k.observations, H, fit10k.params)
        assert abs(nxt.beta - fit10k.params.beta) < 1e-6
        assert abs(nxt.sigma_sq - fit10k.params.sigma_sq) < 1e-6

    def test_alphas_at_final_beta(self, s10k, fit10k):
        np.testing.assert_array_equal(fit10k.alphas, swing_angles(s10k.observations, fit10k.params, H))

    def test_deterministic(self, s10k, fit10k):
        again = calibrate(s10k.observations, H)
        assert again.trace == fit10k.trace

    def test_iteration_cap_flags(self, s10k):
        rep = calibrate(s10k.observations, H, CalibrationConfig(max_iterations=1))
        assert rep.iterations == 1 and not rep.converged
        assert len(rep.trace) == 2

    @pytest.mark.parametrize("start", range(0, 10))
    def test_initial_value_robust(self, s10k, fit10k, start):
        rep = calibrate(s10k.observations, H, CalibrationConfig(initial_beta=deg(start)))
        assert abs(rep.params.beta - fit10k.params.beta) < 1e-8
        assert abs(rep.params.sigma_sq - fit10k.params.sigma_sq) < 1e-8

    def test_beta_zero_data(self):
        s = sample(20_000, beta=0.0, seed=3)
        rep = calibrate(s.observations, H, CalibrationConfig(clamp_infeasible=True))
        m, _ = s.observations
        assert rep.params.beta < deg(0.5)
        closed = float(np.mean(np.arctan(m / H) ** 2))
        assert rep.params.sigma_sq == pytest.approx(closed, rel=0.02)
        at_zero = calibrate(s.observations, H, CalibrationConfig(clamp_infeasible=True, max_iterations=1))
        assert at_zero.trace[0][1] == pytest.approx(closed, rel=1e-12)

    def test_infeasible_propagates(self):
        # every frame on the principal point from a tilted start
        with pytest.raises(CalibrationInfeasibleError):
            calibrate([ImagePoint(0.0)] * 4, H, CalibrationConfig(initial_beta=deg(2)))

    def test_degenerate_flag(self):
        rep = calibrate([ImagePoint(0.0)] * 4, H)
        assert rep.degenerate and rep.converged
        assert rep.to_dict()["degenerate"] is True

    def test_report_dict(self, fit10k):
        d = fit10k.to_dict()
        assert len(d["trace"]) == fit10k.iterations + 1
        assert d["final_rel_delta_sigma_sq"] >= 0

    def test_n_grid_shrinks(self):
        med = []
        for n in (100, 1000, 10_000):
            errs = []
            for rep in range(30):
                s = draw_sample(deg(5), deg(2), H, n, make_rng(99, n, rep))
                errs.append(abs(calibrate(s.observations, H).params.beta - deg(5)))
            med.append(np.median(errs))
        assert med[0] > med[1] > med[2]


class TestConfig:
    @pytest.mark.parametrize(
        "kw", [dict(epsilon=0), dict(max_iterations=0), dict(max_iterations=1.5), dict(initial_beta=-0.1)]
    )
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            CalibrationConfig(**kw)

    def test_params_bounds(self):
        with pytest.raises(ConfigError):
            ModelParams(math.pi / 2, 0.1)
        with pytest.raises(ConfigError):
            ModelParams(0.1, -1e-3)
        assert ModelParams(0.1, 4.0).sigma == 2.0


def test_moment_identity():
    s = draw_sample(deg(5), deg(2), H, 100_000, make_rng(5, 0, 0))
    v = H / np.hypot(s.m, H)
    se = v.std(ddof=1) / math.sqrt(v.size)
    assert abs(v.mean() - math.cos(deg(5)) * math.exp(-deg(2) ** 2 / 2)) < 4 * se


def test_second_moment_of_latent_alpha():
    s = draw_sample(deg(5), deg(2), H, 100_000, make_rng(6, 0, 0))
    a2 = s.alpha**2
    se = a2.std(ddof=1) / math.sqrt(a2.size)
    assert abs(a2.mean() - deg(2) ** 2) < 4 * se


@pytest.fixture(scope="module")
def s2k():
    return sample(2_000, seed=8)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 100.0))
def test_scale_consistency(s2k, k):
    m, theta = s2k.observations
    base = calibrate((m, theta), H)
    scaled = calibrate((m * k, theta), H * k)
    assert scaled.iterations == base.iterations
    assert scaled.params.beta == pytest.approx(base.params.beta, abs=1e-12)
    assert scaled.params.sigma_sq == pytest.approx(base.params.sigma_sq, rel=1e-10)
    np.testing.assert_allclose(scaled.alphas, base.alphas, atol=1e-12)


@pytest.mark.parametrize("k", [0.25, 2.0, 1024.0])
def test_scale_consistency_exact_for_powers_of_two(s2k, k):
    m, theta = s2k.observations
    base = calibrate((m, theta), H)
    scaled = calibrate((m * k, theta), H * k)
    assert scaled.trace == base.trace
    np.testing.assert_array_equal(scaled.alphas, base.alphas)
