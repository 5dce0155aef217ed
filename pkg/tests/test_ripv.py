import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ffqcrl.optimize import ControlProblem
from ffqcrl.pulse import PulseParams
from ffqcrl.ripv import (
    DegenerateLandscapeError,
    ExactEvaluator,
    FamilyRecord,
    ParallelGradientsError,
    RipvAborted,
    RipvConfig,
    generate_family,
    project_direction,
    ripv_step,
)

# gradients live well away from the subnormal range, where norms underflow
finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False).filter(lambda x: x == 0 or abs(x) > 1e-6)
vec7 = arrays(np.float64, 7, elements=finite)


# --------------------------------------------------------------------- projection

def test_hand_gram_schmidt():
    np.testing.assert_array_equal(project_direction([1.0, 1.0, 0.0], [0.0, 2.0, 0.0]), [1.0, 0.0, 0.0])


def test_already_orthogonal_is_unchanged():
    g = np.array([1.0, 0.0, -3.0])
    np.testing.assert_array_equal(project_direction(g, [0.0, 5.0, 0.0]), g)


def test_parallel_raises():
    with pytest.raises(ParallelGradientsError):
        project_direction([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    with pytest.raises(ParallelGradientsError):
        project_direction([1.0, 2.0, 3.0], [-2.0, -4.0, -6.0])


def test_degenerate_raises():
    with pytest.raises(DegenerateLandscapeError):
        project_direction([1.0, 0.0], [1e-13, 0.0])


def test_length_mismatch():
    with pytest.raises(ValueError):
        project_direction([1.0, 0.0], [1.0, 0.0, 0.0])


@settings(max_examples=200, deadline=None)
@given(vec7, vec7)
def test_projection_is_orthogonal(g_J, g_R):
    try:
        perp = project_direction(g_J, g_R)
    except (DegenerateLandscapeError, ParallelGradientsError):
        return
    assert abs(np.dot(g_R, perp)) <= 1e-12 * np.linalg.norm(g_R) * np.linalg.norm(perp)
    # the residual g_J - perp lies along g_R
    resid = np.asarray(g_J) - perp
    assert np.linalg.norm(resid - np.dot(resid, g_R) / np.dot(g_R, g_R) * g_R) <= 1e-9 * (1 + np.linalg.norm(g_J))


# --------------------------------------------------------------------- a cheap linear landscape

class QuadraticEvaluator:
    """R(c) = |A c|^2 with an exact gradient; stands in for the filter-function metric."""

    def __init__(self, A):
        self.A = np.asarray(A, dtype=float)

    def value(self, values):
        return float(np.sum((self.A @ values) ** 2))

    def value_and_gradient(self, values):
        return self.value(values), 2 * self.A.T @ (self.A @ values)


@pytest.fixture(scope="module")
def small_problem(grid, psd):
    from ffqcrl.filterfn import FrequencyGrid

    return ControlProblem(grid, psd, FrequencyGrid.default(points_per_band=32), math.pi)


@pytest.fixture(scope="module")
def start(small_problem):
    from ffqcrl.optimize import polish_angle, sine_pulse

    v = sine_pulse(math.pi, small_problem.grid).values.copy()
    v[1:4] = [0.02, -0.01, 0.015]
    v[4:] = [0.3, -0.7, 1.1]
    return polish_angle(v, small_problem)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (3, 7), elements=st.floats(-2, 2)), st.floats(1e-4, 0.05))
def test_step_identity_and_orthogonality(small_problem, start, A, dtheta):
    ev = QuadraticEvaluator(A)
    try:
        new, diag = ripv_step(start, small_problem, RipvConfig(dtheta=dtheta), ev)
    except (DegenerateLandscapeError, ParallelGradientsError):
        return
    assert abs(diag.predicted_dtheta - dtheta) <= 1e-12
    assert diag.orthogonality <= 1e-10
    assert diag.step_norm == pytest.approx(np.linalg.norm(new - start))


def test_step_parallel_landscape_raises(small_problem, start):
    from ffqcrl.pulse import theta_gradient

    g_J = theta_gradient(PulseParams(start), small_problem.grid)

    class Parallel:
        def value_and_gradient(self, values):
            return 1.0, 3.0 * g_J

    with pytest.raises(ParallelGradientsError):
        ripv_step(start, small_problem, RipvConfig(), Parallel())


def test_theta_direct_needs_no_evaluator(small_problem, start):
    new, diag = ripv_step(start, small_problem, RipvConfig(strategy="theta-direct"), None)
    assert math.isnan(diag.robustness)
    assert small_problem.theta(new) - small_problem.theta(start) == pytest.approx(0.002, rel=0.05)


def test_random_projected_is_seeded(small_problem, start):
    cfg = RipvConfig(strategy="random-projected")
    a, _ = ripv_step(start, small_problem, cfg, None, np.random.default_rng(3))
    b, _ = ripv_step(start, small_problem, cfg, None, np.random.default_rng(3))
    c, _ = ripv_step(start, small_problem, cfg, None, np.random.default_rng(4))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_config_validation():
    with pytest.raises(ValueError):
        RipvConfig(dtheta=0)
    with pytest.raises(ValueError):
        RipvConfig(strategy="nope")
    with pytest.raises(ValueError):
        RipvConfig(recorrection_period=0)
    with pytest.raises(ValueError):
        RipvConfig(stride=0)


# --------------------------------------------------------------------- family bookkeeping

def short_family(problem, start, **cfg):
    ev = QuadraticEvaluator(np.eye(7)[:2])
    return generate_family(PulseParams(start), problem, RipvConfig(theta_target=math.pi + 0.02, **cfg), ev)


def test_family_grid_and_count(small_problem, start):
    rec = short_family(small_problem, start)
    assert len(rec.entries) == 10
    np.testing.assert_allclose(np.diff(rec.thetas), 0.002, atol=1e-12)
    assert np.all(np.diff(rec.thetas) > 0)
    assert all(e.values.size == 7 for e in rec.all_entries())
    assert max(abs(e.theta_residual) for e in rec.entries) < 1e-3


def test_stride_keeps_the_last_step(small_problem, start):
    rec = short_family(small_problem, start, stride=4)
    assert [round((e.theta - math.pi) / 0.002) for e in rec.entries] == [4, 8, 10]


def test_downward_sweep(small_problem, start):
    ev = QuadraticEvaluator(np.eye(7)[:2])
    rec = generate_family(PulseParams(start), small_problem, RipvConfig(theta_target=math.pi - 0.01), ev)
    assert len(rec.entries) == 5
    np.testing.assert_allclose(np.diff(rec.thetas), -0.002, atol=1e-12)


def test_recorrection_hook_holds_angle(small_problem, start):
    ev = QuadraticEvaluator(np.eye(7)[:2])
    plain = generate_family(PulseParams(start), small_problem, RipvConfig(theta_target=math.pi + 0.006), ev)
    fixed = generate_family(PulseParams(start), small_problem,
                            RipvConfig(theta_target=math.pi + 0.006, recorrection_period=1), ev)
    assert not np.allclose(plain.entries[-1].values, fixed.entries[-1].values)
    assert abs(fixed.entries[-1].theta_residual) < 1e-3


def test_abort_keeps_partial_record(small_problem, start):
    class FailsLater(QuadraticEvaluator):
        calls = 0

        def value_and_gradient(self, values):
            self.calls += 1
            if self.calls > 3:
                return 0.0, np.zeros_like(values)
            return super().value_and_gradient(values)

    with pytest.raises(RipvAborted) as info:
        generate_family(PulseParams(start), small_problem, RipvConfig(theta_target=math.pi + 0.02),
                        FailsLater(np.eye(7)[:2]))
    assert len(info.value.record.entries) == 3
    assert isinstance(info.value.__cause__, DegenerateLandscapeError)


def test_csv_and_json(tmp_path, small_problem, start):
    rec = short_family(small_problem, start)
    path = tmp_path / "family.csv"
    rec.to_csv(path, header_comment="config abc")
    lines = path.read_text().splitlines()
    assert lines[0] == "# config abc"
    assert lines[1] == "theta,c1,c2,c3,c4,c5,c6,c7,R"
    assert len(lines) == 2 + len(rec.entries)
    back = FamilyRecord.from_json(rec.to_json())
    np.testing.assert_array_equal(back.parameters, rec.parameters)
    np.testing.assert_array_equal(back.thetas, rec.thetas)
    assert back.initial.robustness == rec.initial.robustness
    assert json.loads(rec.to_json())["entries"][0]["diagnostics"]["orthogonality"] <= 1e-10


def test_nearest(small_problem, start):
    rec = short_family(small_problem, start)
    assert rec.nearest(math.pi + 0.0041).theta == pytest.approx(math.pi + 0.004)
    assert rec.nearest(0.0) is rec.initial


# --------------------------------------------------------------------- on the real landscape

@pytest.mark.slow
def test_one_step_advance(ff_pulse, problem):
    new, _ = ripv_step(ff_pulse.values, problem, RipvConfig(), ExactEvaluator(problem))
    assert problem.theta(new) - problem.theta(ff_pulse.values) == pytest.approx(0.002, abs=1e-4)


@pytest.mark.slow
def test_step_halving_drift(ff_pulse, problem):
    ev = ExactEvaluator(problem)
    R0 = ev.value(ff_pulse.values)
    drift = []
    for dtheta in (0.002, 0.001):
        new, _ = ripv_step(ff_pulse.values, problem, RipvConfig(dtheta=dtheta), ev)
        drift.append(abs(ev.value(new) - R0))
    assert drift[0] / drift[1] == pytest.approx(4.0, rel=0.1)


@pytest.mark.slow
def test_family_smooth_and_bounded(family):
    rec, _ = family
    P = np.array([e.values for e in rec.all_entries()])
    jumps = np.linalg.norm(np.diff(P, axis=0), axis=1)
    assert jumps.max() < 10 * np.median(jumps)
    assert 0.5 <= rec.entries[-1].robustness / rec.initial.robustness <= 2.0
    assert max(e.diagnostics.orthogonality for e in rec.entries) <= 1e-10


@pytest.mark.slow
def test_reversibility(ff_pulse, problem):
    cfg = RipvConfig(theta_target=1.5 * math.pi)
    out = generate_family(ff_pulse, problem, cfg)
    end = out.entries[-1]
    back = generate_family(out.pulse(end), problem.replace(theta_target=end.theta),
                           RipvConfig(theta_target=math.pi))
    assert back.entries[-1].theta == pytest.approx(math.pi, abs=1e-9)
    gap = np.linalg.norm(back.entries[-1].values - ff_pulse.values)
    assert gap <= 1e-2 * np.linalg.norm(ff_pulse.values)
