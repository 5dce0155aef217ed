"""Single-angle pulse initialization: weighted cost, finite-difference gradients, Adam."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .filterfn import FrequencyGrid, filter_values, toggling_frame_ops
from .noise import NoisePsd, omega0
from .pulse import AMP_PHASE, PulseParams, amp_penalty, evaluate_batch, smooth_penalty, theta_gradient
from .quantum import SystemModel, TimeGrid, infidelity, propagate_control, rx

logger = logging.getLogger(__name__)

TERMS = ("fidelity", "robust", "amp", "smooth")


class NumericalFailure(RuntimeError):
    """A cost evaluation produced a non-finite value or the optimizer diverged."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class CostWeights:
    fidelity: float = 1.0
    robust: float = 0.03
    amp: float = 1e-4
    smooth: float = 1e-4

    def __post_init__(self):
        for name in TERMS:
            if getattr(self, name) < 0:
                raise ValueError(f"weight {name} must be nonnegative")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in TERMS])


@dataclass(frozen=True)
class CostBreakdown:
    fidelity: float
    robust: float
    amp: float
    smooth: float
    weights: CostWeights

    @property
    def weighted(self) -> dict:
        return {name: getattr(self.weights, name) * getattr(self, name) for name in TERMS}

    @property
    def total(self) -> float:
        return float(sum(self.weighted.values()))

    def as_dict(self) -> dict:
        return {"total": self.total, **{name: getattr(self, name) for name in TERMS}}


@dataclass(frozen=True)
class ControlProblem:
    """Everything needed to score a flat parameter vector for one target angle.

    ``fidelity_mode`` selects the squared angle residual (``"theta"``) or the
    full unitary infidelity against ``R_x(theta_target)`` (``"unitary"``).
    """

    grid: TimeGrid
    psd: NoisePsd
    freq_grid: FrequencyGrid
    theta_target: float
    weights: CostWeights = field(default_factory=CostWeights)
    model: SystemModel = field(default_factory=SystemModel.detuned_qubit)
    basis: str = AMP_PHASE
    window: str = "sine"
    fidelity_mode: str = "theta"

    def __post_init__(self):
        if self.fidelity_mode not in ("theta", "unitary"):
            raise ValueError(f"unknown fidelity mode {self.fidelity_mode!r}")
        if len(self.model.controls) != 1:
            raise ValueError("pulse problems drive exactly one control channel")

    def param_scale(self, n_params: int) -> np.ndarray:
        """Natural unit per coordinate: ``w0 = 2 pi / T`` for amplitudes, 1 rad for phases."""
        scale = np.full(n_params, omega0(self.grid.duration))
        if self.basis == AMP_PHASE:
            scale[(n_params + 1) // 2:] = 1.0
        return scale

    def replace(self, **changes) -> "ControlProblem":
        return replace(self, **changes)

    def pulses(self, values) -> np.ndarray:
        return evaluate_batch(values, self.basis, self.grid, self.window)

    def theta(self, values):
        out = self.pulses(values).sum(axis=-1) * self.grid.dt
        return float(out) if np.ndim(out) == 0 else out

    def terms(self, values) -> np.ndarray:
        """Unweighted cost terms, shape ``(..., 4)`` in ``TERMS`` order."""
        samples = self.pulses(values)
        prop = propagate_control(self.model, samples[..., None, :], self.grid)
        ops = toggling_frame_ops(self.model, prop)
        F = filter_values(ops, self.model.projector, self.grid, self.freq_grid.omegas)
        robust = self._band_integral(F)
        if self.fidelity_mode == "theta":
            fid = (samples.sum(axis=-1) * self.grid.dt - self.theta_target) ** 2
        else:
            fid = infidelity(rx(self.theta_target), prop.final)
        return np.stack(
            [fid, robust, np.asarray(amp_penalty(samples, self.grid)), np.asarray(smooth_penalty(samples, self.grid))],
            axis=-1,
        )

    def _band_integral(self, F: np.ndarray) -> np.ndarray:
        # F has shape (..., n_noise, n_omega); one PSD shared by every channel
        total = 0.0
        start = 0
        for w in self.freq_grid.band_omegas():
            stop = start + w.size
            total = total + np.trapezoid(F[..., start:stop] * self.psd(w), w, axis=-1)
            start = stop
        return np.sum(total, axis=-1) / (2 * np.pi)

    def robustness(self, values):
        out = self.terms(values)[..., 1]
        return float(out) if np.ndim(out) == 0 else out

    def total(self, values):
        out = self.terms(values) @ self.weights.as_array()
        return float(out) if np.ndim(out) == 0 else out


def _values(params) -> np.ndarray:
    return np.asarray(params.values if isinstance(params, PulseParams) else params, dtype=float)


def total_cost(params, problem: ControlProblem) -> CostBreakdown:
    """Weighted four-term cost with its per-term breakdown."""
    t = problem.terms(_values(params))
    if not np.all(np.isfinite(t)):
        raise NumericalFailure(f"non-finite cost terms {t}")
    return CostBreakdown(*map(float, t), weights=problem.weights)


def fd_steps(values: np.ndarray) -> np.ndarray:
    return np.maximum(1e-5, 1e-4 * np.abs(values))


def fd_gradient(fn, values, steps=None) -> np.ndarray:
    """Central differences of a batched scalar function ``fn``.

    All ``2P`` probe points go through ``fn`` in one call.
    """
    values = np.asarray(values, dtype=float)
    h = fd_steps(values) if steps is None else np.asarray(steps, dtype=float)
    probes = np.concatenate([values + np.diag(h), values - np.diag(h)])
    f = np.asarray(fn(probes), dtype=float)
    if not np.all(np.isfinite(f)):
        raise NumericalFailure("non-finite cost at a finite-difference probe point")
    P = values.size
    return (f[:P] - f[P:]) / (2 * h)


def gradient(params, problem: ControlProblem, steps=None) -> np.ndarray:
    """Central finite-difference gradient of the total cost."""
    return fd_gradient(problem.total, _values(params), steps)


@dataclass
class OptimizeReport:
    initial: dict
    final: dict
    params: PulseParams
    iterations: int
    stop_reason: str
    trace: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "initial": self.initial,
                "final": self.final,
                "params": json.loads(self.params.to_json()),
                "iterations": self.iterations,
                "stop_reason": self.stop_reason,
            },
            indent=2,
        )

    def trace_to_csv(self, path, header_comment: str | None = None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh)
            writer.writerow(["iteration", "total", *TERMS, "grad_norm"])
            writer.writerows(self.trace)


def minimize(initial: PulseParams, problem: ControlProblem, lr: float = 1e-2, betas=(0.9, 0.999),
             eps: float = 1e-8, max_iter: int = 2000, gtol: float = 1e-6, ftol: float = 1e-10,
             patience: int = 25, divergence: float = 1e6, angle_polish: bool = True) -> OptimizeReport:
    """Adam descent on the total cost with finite-difference gradients.

    Adam runs in dimensionless coordinates (amplitudes in units of ``2 pi / T``,
    phases in radians) so that one step size suits every coordinate.

    Stops when the gradient infinity-norm drops below ``gtol`` or the best cost
    improves by less than ``ftol`` (relative) over ``patience`` iterations.
    Returns the best iterate seen, so the final cost never exceeds the initial one.

    With ``angle_polish`` (simplified fidelity only) the returned pulse has its
    ``a0`` shifted so the rotation angle hits the target exactly. The angle is
    linear in ``a0``, so one shift suffices; the penalty weight alone leaves a
    residual of order ``1e-4`` rad.
    """
    if initial.basis != problem.basis:
        raise ValueError("initial pulse basis differs from the problem basis")
    x = np.array(initial.values, dtype=float)
    scale = problem.param_scale(x.size)
    b1, b2 = betas
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    start = total_cost(x, problem)
    best_x, best_f = x.copy(), start.total
    history = [best_f]
    trace = []
    reason = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        g = gradient(x, problem)
        breakdown = total_cost(x, problem)
        f = breakdown.total
        gnorm = float(np.max(np.abs(g)))
        trace.append([it - 1, f, *(getattr(breakdown, n) for n in TERMS), gnorm])
        if f > divergence:
            report = OptimizeReport(start.as_dict(), breakdown.as_dict(), initial.with_values(best_x), it,
                                    "diverged", trace)
            raise NumericalFailure(f"cost {f:.3e} exceeded {divergence:.1e}", report)
        if f < best_f:
            best_x, best_f = x.copy(), f
        history.append(best_f)
        if gnorm < gtol:
            reason = "gtol"
            break
        if len(history) > patience and history[-patience - 1] - best_f <= ftol * abs(history[-patience - 1]):
            reason = "ftol"
            break
        gs = g * scale
        m = b1 * m + (1 - b1) * gs
        v = b2 * v + (1 - b2) * gs * gs
        m_hat = m / (1 - b1**it)
        v_hat = v / (1 - b2**it)
        x = x - scale * lr * m_hat / (np.sqrt(v_hat) + eps)
    final_x = x if total_cost(x, problem).total < best_f else best_x
    if angle_polish and problem.fidelity_mode == "theta":
        polished = polish_angle(final_x, problem)
        if total_cost(polished, problem).total <= start.total:
            final_x = polished
    final = total_cost(final_x, problem)
    logger.info("minimize: %s after %d iterations, cost %.6e -> %.6e", reason, it, start.total, final.total)
    return OptimizeReport(start.as_dict(), final.as_dict(), initial.with_values(final_x), it, reason, trace)


def polish_angle(values, problem: ControlProblem) -> np.ndarray:
    """Shift ``a0`` so the pulse area equals ``problem.theta_target``."""
    values = np.array(values, dtype=float)
    g0 = theta_gradient(PulseParams(values, problem.basis), problem.grid, problem.window)[0]
    values[0] += (problem.theta_target - problem.theta(values)) / g0
    return values


def sine_pulse(theta: float, grid: TimeGrid, n_harmonics: int = 3, window: str = "sine") -> PulseParams:
    """Harmonic-free windowed pulse whose midpoint-rule area is exactly ``theta``."""
    area = evaluate_batch(np.eye(2 * n_harmonics + 1)[0], AMP_PHASE, grid, window).sum() * grid.dt
    return PulseParams.amp_phase(theta / area, np.zeros(n_harmonics), np.zeros(n_harmonics))


def static_problem(problem: ControlProblem) -> ControlProblem:
    """Same problem with the robustness band shrunk to ``(0, 0.1 w0)`` (quasi-static noise)."""
    w0 = omega0(problem.grid.duration)
    band = FrequencyGrid(((0.0, 0.1 * w0),), problem.freq_grid.points_per_band, problem.freq_grid.mirrored)
    return problem.replace(freq_grid=band)


def quasi_static_baseline(problem: ControlProblem, initial: PulseParams | None = None, **kwargs) -> OptimizeReport:
    """Pulse optimized against quasi-static noise only.

    Runs :func:`minimize` on :func:`static_problem` starting from the sine pulse
    at ``problem.theta_target`` unless ``initial`` is given.
    """
    if initial is None:
        initial = sine_pulse(problem.theta_target, problem.grid, window=problem.window)
    return minimize(initial, static_problem(problem), **kwargs)


def initialize(problem: ControlProblem, initial: PulseParams | None = None,
               **kwargs) -> tuple[OptimizeReport, OptimizeReport]:
    """Quasi-static baseline followed by the full band-robust optimization started from it."""
    baseline = quasi_static_baseline(problem, initial, **kwargs)
    return baseline, minimize(baseline.params, problem, **kwargs)
