import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from ffqcrl.pulse import (
    PulseParams,
    amp_penalty,
    evaluate_batch,
    evaluate_pulse,
    smooth_penalty,
    theta_actual,
    theta_gradient,
)
from ffqcrl.quantum import TimeGrid

T = 50.0
GRID = TimeGrid(T, 1000)
ODD = TimeGrid(T, 1001)  # the middle node sits at T/2

coef = st.floats(-2, 2, allow_nan=False)
phase = st.floats(-10, 10, allow_nan=False)


def mid(samples):
    return samples[ODD.n_steps // 2]


class TestEvaluate:
    def test_bare_window_peak(self):
        p = PulseParams.amp_phase(1.0)
        assert mid(evaluate_pulse(p, ODD)) == pytest.approx(1.0, abs=1e-15)

    def test_zero_params(self):
        assert not np.any(evaluate_pulse(PulseParams.amp_phase(0, [0, 0], [0, 0]), GRID))

    def test_quarter_phase_harmonic(self):
        p = PulseParams.amp_phase(1.0, [0.5], [np.pi / 2])
        assert mid(evaluate_pulse(p, ODD)) == pytest.approx(1.0, abs=1e-12)

    def test_endpoints_vanish_with_window(self):
        p = PulseParams.amp_phase(1.0, [0.3, 0.2], [0.1, 2.0])
        s = evaluate_pulse(p, GRID)
        bound = np.abs(s).max() * np.sin(np.pi * GRID.dt / (2 * T)) * (1 + 0.5)
        assert abs(s[0]) <= bound and abs(s[-1]) <= bound

    def test_no_window(self):
        p = PulseParams.amp_phase(0.7)
        np.testing.assert_allclose(evaluate_pulse(p, GRID, "none"), 0.7)

    def test_bad_length(self):
        with pytest.raises(ValueError):
            PulseParams(np.zeros(4))

    @settings(max_examples=40, deadline=None)
    @given(st.lists(coef, min_size=7, max_size=7), st.lists(coef, min_size=7, max_size=7), coef)
    def test_superposition_in_cos_sin_form(self, u, v, k):
        pu, pv = PulseParams(np.array(u), "cos-sin"), PulseParams(np.array(v), "cos-sin")
        combined = PulseParams(np.array(u) + k * np.array(v), "cos-sin")
        np.testing.assert_allclose(evaluate_pulse(combined, GRID),
                                   evaluate_pulse(pu, GRID) + k * evaluate_pulse(pv, GRID), atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(coef, st.lists(coef, min_size=3, max_size=3), st.lists(phase, min_size=3, max_size=3))
    def test_basis_conversion_lossless(self, a0, amps, phases):
        p = PulseParams.amp_phase(a0, amps, phases)
        c = p.to_cos_sin()
        np.testing.assert_allclose(evaluate_pulse(c, GRID), evaluate_pulse(p, GRID), atol=1e-12)
        back = c.to_amp_phase()
        np.testing.assert_allclose(evaluate_pulse(back, GRID), evaluate_pulse(p, GRID), atol=1e-12)
        np.testing.assert_allclose(back.to_cos_sin().values, c.values, atol=1e-12)

    def test_json_round_trip(self):
        p = PulseParams.amp_phase(0.1, [0.2, -0.3], [1.0, 7.5])
        d = json.loads(p.to_json())
        assert d["basis"] == "amp-phase" and d["values"] == [0.1, 0.2, -0.3, 1.0, 7.5]
        q = PulseParams.from_json(p.to_json())
        assert q.basis == p.basis and np.array_equal(q.values, p.values)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(0)
        vals = rng.normal(size=(4, 7))
        batch = evaluate_batch(vals, "amp-phase", GRID)
        for v, row in zip(vals, batch):
            np.testing.assert_allclose(row, evaluate_pulse(PulseParams(v), GRID), atol=1e-14)


class TestThetaActual:
    def test_pi_sine_pulse(self):
        p = PulseParams.amp_phase(np.pi**2 / (2 * T))
        # midpoint quadrature of the window carries a relative error of pi^2 / (24 n^2)
        assert theta_actual(p, GRID) == pytest.approx(np.pi, rel=1e-6)

    def test_zero(self):
        assert theta_actual(PulseParams.amp_phase(0, [0], [0]), GRID) == 0.0

    def test_first_harmonic_area(self):
        # oracle: adaptive quadrature of sin(pi t/T) cos(2 pi t/T)
        expected = quad(lambda t: np.sin(np.pi * t / T) * np.cos(2 * np.pi * t / T), 0, T)[0]
        assert expected == pytest.approx(-2 * T / (3 * np.pi), rel=1e-12)
        p = PulseParams.amp_phase(0.0, [1.0], [0.0])
        assert theta_actual(p, GRID) == pytest.approx(expected, rel=1e-5)

    @pytest.mark.parametrize("l", [1, 2, 3])
    def test_harmonic_areas_against_quadrature(self, l):
        phi = 0.4 * l
        p = PulseParams.amp_phase(0.0, np.eye(3)[l - 1], np.full(3, phi))
        expected = quad(lambda t: np.sin(np.pi * t / T) * np.cos(2 * l * np.pi * t / T + phi), 0, T, limit=200)[0]
        # midpoint rule: leading relative error (k pi / n)^2 / 24 for the fastest component, k = 2l + 1
        tol = 2 * ((2 * l + 1) * np.pi / GRID.n_steps) ** 2 / 24
        assert theta_actual(p, GRID) == pytest.approx(expected, rel=tol)

    def test_slope_in_a0(self):
        g = theta_gradient(PulseParams.amp_phase(0.3, [0.1, 0.2, 0.3], [1, 2, 3]), GRID)
        assert g[0] == pytest.approx(2 * T / np.pi, rel=1e-6)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(coef, min_size=7, max_size=7))
    def test_gradient_matches_finite_differences(self, vals):
        p = PulseParams(np.array(vals))
        g = theta_gradient(p, GRID)
        h = 1e-6
        fd = [(theta_actual(p.with_values(p.values + h * e), GRID) - theta_actual(p.with_values(p.values - h * e),
                                                                                    GRID)) / (2 * h)
              for e in np.eye(7)]
        np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-6)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(coef, min_size=7, max_size=7), st.lists(coef, min_size=7, max_size=7))
    def test_linear_in_cos_sin_coefficients(self, u, v):
        a, b = PulseParams(np.array(u), "cos-sin"), PulseParams(np.array(v), "cos-sin")
        s = PulseParams(np.array(u) + np.array(v), "cos-sin")
        assert theta_actual(s, GRID) == pytest.approx(theta_actual(a, GRID) + theta_actual(b, GRID), abs=1e-10)


class TestPenalties:
    sine = evaluate_pulse(PulseParams.amp_phase(1.0), GRID)

    def test_zero(self):
        z = np.zeros(GRID.n_steps)
        assert amp_penalty(z, GRID) == 0 and smooth_penalty(z, GRID) == 0

    def test_amp_of_window(self):
        assert amp_penalty(self.sine, GRID) == pytest.approx(T / 2, rel=1e-9)

    def test_amp_homogeneous_degree_two(self):
        s = evaluate_pulse(PulseParams.amp_phase(0.3, [0.2], [1.0]), GRID)
        assert amp_penalty(2 * s, GRID) == pytest.approx(4 * amp_penalty(s, GRID), rel=1e-14)

    def test_smooth_of_window(self):
        assert smooth_penalty(self.sine, GRID) == pytest.approx((np.pi / T) ** 2 * T / 2, rel=1e-2)

    def test_smooth_needs_three_steps(self):
        with pytest.raises(ValueError):
            smooth_penalty(np.zeros(2), TimeGrid(T, 2))

    def test_smooth_grows_with_harmonic_index(self):
        vals = [smooth_penalty(evaluate_pulse(PulseParams.amp_phase(0, np.eye(3)[l], np.zeros(3)), GRID), GRID)
                for l in range(3)]
        assert vals[0] < vals[1] < vals[2]

    @settings(max_examples=25, deadline=None)
    @given(st.lists(coef, min_size=7, max_size=7))
    def test_time_reversal_invariance(self, vals):
        s = evaluate_pulse(PulseParams(np.array(vals)), GRID)
        assert amp_penalty(s[::-1], GRID) == pytest.approx(amp_penalty(s, GRID), rel=1e-12, abs=1e-14)
        assert smooth_penalty(s[::-1], GRID) == pytest.approx(smooth_penalty(s, GRID), rel=1e-12, abs=1e-14)
