"""Robustness-invariant pulse variation: transport a pulse along a gate-angle family.

Each step moves the parameters along the angle gradient with its component
along the robustness gradient removed, scaled so that the first-order angle
change is exactly ``dtheta``.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .optimize import ControlProblem, fd_gradient, fd_steps
from .pulse import PulseParams, theta_gradient

logger = logging.getLogger(__name__)

STRATEGIES = ("project", "theta-direct", "random-projected")


class DegenerateLandscapeError(ArithmeticError):
    """The robustness gradient vanishes, so no level set is defined."""


class ParallelGradientsError(ArithmeticError):
    """Angle and robustness gradients are parallel; the level set cannot change the angle."""


class RipvAborted(RuntimeError):
    """A sweep step failed; ``record`` holds every entry accepted before the failure."""

    def __init__(self, message, record):
        super().__init__(message)
        self.record = record


def project_direction(g_J, g_R) -> np.ndarray:
    """Gram-Schmidt: remove the ``g_R`` component from ``g_J``."""
    g_J = np.asarray(g_J, dtype=float)
    g_R = np.asarray(g_R, dtype=float)
    if g_J.shape != g_R.shape:
        raise ValueError("gradient lengths differ")
    nR = np.linalg.norm(g_R)
    if nR < 1e-12:
        raise DegenerateLandscapeError(f"robustness gradient norm {nR:.3e} is below 1e-12")
    u = g_R / nR
    perp = g_J - np.dot(u, g_J) * u
    # second pass removes the rounding residue along g_R
    perp = perp - np.dot(u, perp) * u
    if np.linalg.norm(perp) < 1e-10 * np.linalg.norm(g_J):
        raise ParallelGradientsError("angle gradient is parallel to the robustness gradient")
    return perp


class ExactEvaluator:
    """Robustness metric and its central-difference gradient from the filter-function pipeline."""

    def __init__(self, problem: ControlProblem):
        self.problem = problem

    def value_and_gradient(self, values) -> tuple[float, np.ndarray]:
        values = np.asarray(values, dtype=float)
        h = fd_steps(values)
        probes = np.concatenate([values + np.diag(h), values - np.diag(h), values[None, :]])
        R = np.asarray(self.problem.robustness(probes))
        P = values.size
        return float(R[-1]), (R[:P] - R[P:2 * P]) / (2 * h)

    def value(self, values) -> float:
        return float(self.problem.robustness(np.asarray(values, dtype=float)))

    def gradient(self, values) -> np.ndarray:
        return fd_gradient(self.problem.robustness, values)


@dataclass(frozen=True)
class RipvConfig:
    dtheta: float = 0.002
    theta_target: float = 2 * math.pi
    strategy: str = "project"
    recorrection_period: int | None = None
    recorrection_rate: float = 0.01
    stride: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.dtheta > 0:
            raise ValueError("dtheta must be positive")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.recorrection_period is not None and self.recorrection_period < 1:
            raise ValueError("recorrection_period must be a positive integer")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


@dataclass(frozen=True)
class StepDiagnostics:
    robustness: float
    step_norm: float
    orthogonality: float  # |<g_R, dc>| / (|g_R| |dc|)
    predicted_dtheta: float


@dataclass(frozen=True)
class FamilyEntry:
    theta: float
    values: np.ndarray
    robustness: float
    theta_residual: float
    diagnostics: StepDiagnostics | None = None


@dataclass
class FamilyRecord:
    """Initial pulse plus one entry per recorded step, uniformly spaced in angle."""

    initial: FamilyEntry
    entries: list = field(default_factory=list)
    basis: str = "amp-phase"
    dtheta: float = 0.002

    @property
    def thetas(self) -> np.ndarray:
        return np.array([e.theta for e in self.entries])

    @property
    def parameters(self) -> np.ndarray:
        return np.array([e.values for e in self.entries])

    def all_entries(self) -> list:
        return [self.initial, *self.entries]

    def nearest(self, theta: float) -> FamilyEntry:
        entries = self.all_entries()
        return entries[int(np.argmin([abs(e.theta - theta) for e in entries]))]

    def pulse(self, entry: FamilyEntry) -> PulseParams:
        return PulseParams(entry.values, self.basis)

    def to_csv(self, path, header_comment: str | None = None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh)
            P = self.initial.values.size
            writer.writerow(["theta", *[f"c{i + 1}" for i in range(P)], "R"])
            for e in self.entries:
                writer.writerow([repr(e.theta), *map(repr, map(float, e.values)), repr(e.robustness)])

    def to_json(self) -> str:
        def entry(e: FamilyEntry):
            out = {
                "theta": e.theta,
                "values": [float(v) for v in e.values],
                "robustness": e.robustness,
                "theta_residual": e.theta_residual,
            }
            if e.diagnostics is not None:
                out["diagnostics"] = {
                    "step_norm": e.diagnostics.step_norm,
                    "orthogonality": e.diagnostics.orthogonality,
                    "predicted_dtheta": e.diagnostics.predicted_dtheta,
                }
            return out

        return json.dumps(
            {"basis": self.basis, "dtheta": self.dtheta, "initial": entry(self.initial),
             "entries": [entry(e) for e in self.entries]}
        )

    @classmethod
    def from_json(cls, text: str) -> "FamilyRecord":
        data = json.loads(text)

        def entry(d):
            return FamilyEntry(d["theta"], np.array(d["values"]), d["robustness"], d["theta_residual"])

        return cls(entry(data["initial"]), [entry(d) for d in data["entries"]], data["basis"], data["dtheta"])


def ripv_step(values, problem: ControlProblem, config: RipvConfig, evaluator, rng=None, dtheta=None):
    """One traversal step; returns ``(new_values, diagnostics)``.

    ``dtheta`` overrides ``config.dtheta`` (a negative value sweeps downwards).

    ``evaluator.value_and_gradient(values)`` supplies ``R`` and its gradient for
    the projected strategy; the other strategies never query it. The angle gradient is exact since the angle is a linear functional of the
    pulse.
    """
    values = np.asarray(values, dtype=float)
    g_J = theta_gradient(PulseParams(values, problem.basis), problem.grid, problem.window)
    if config.strategy == "project":
        R, g_R = evaluator.value_and_gradient(values)
        direction = project_direction(g_J, g_R)
    elif config.strategy == "theta-direct":
        R, g_R = float("nan"), None
        direction = g_J
    else:
        rng = np.random.default_rng(rng)
        g_R = rng.standard_normal(values.size)
        g_R /= np.linalg.norm(g_R)
        R = float("nan")
        direction = project_direction(g_J, g_R)
    dtheta = config.dtheta if dtheta is None else dtheta
    dc = dtheta * direction / np.dot(g_J, direction)
    if g_R is not None and np.linalg.norm(g_R) > 0:
        ortho = abs(np.dot(g_R, dc)) / (np.linalg.norm(g_R) * np.linalg.norm(dc))
    else:
        ortho = float("nan")
    diag = StepDiagnostics(R, float(np.linalg.norm(dc)), float(ortho), float(np.dot(g_J, dc)))
    return values + dc, diag


def _recorrect(values, problem: ControlProblem, config: RipvConfig) -> np.ndarray:
    """Exact-robustness descent step confined to the constant-angle hyperplane."""
    g_J = theta_gradient(PulseParams(values, problem.basis), problem.grid, problem.window)
    R, g_R = ExactEvaluator(problem).value_and_gradient(values)
    g = g_R - np.dot(g_R, g_J) / np.dot(g_J, g_J) * g_J
    nn = np.dot(g, g)
    if nn == 0:
        return values
    return values - config.recorrection_rate * R * g / nn


def sweep_steps(theta0: float, theta_target: float, dtheta: float) -> int:
    """Number of fixed steps needed to reach ``theta_target`` (the last one may overshoot)."""
    return int(math.ceil(abs(theta_target - theta0) / dtheta - 1e-9))


def _value(evaluator, values) -> float:
    return float("nan") if evaluator is None else evaluator.value(values)


def generate_family(init: PulseParams, problem: ControlProblem, config: RipvConfig = RipvConfig(),
                    evaluator=None, progress=None) -> FamilyRecord:
    """Sweep from the initial pulse's target angle to ``config.theta_target``.

    ``problem.theta_target`` is the starting angle. The number of steps is
    ``ceil(|theta_target - theta_0| / dtheta)``; a lower target sweeps downwards. ``evaluator`` defaults to the
    exact filter-function metric for the projected strategy. The other
    strategies only use it to record ``R``; without one, ``R`` is NaN.
    """
    if evaluator is None and config.strategy == "project":
        evaluator = ExactEvaluator(problem)
    theta0 = problem.theta_target
    span = config.theta_target - theta0
    step = math.copysign(config.dtheta, span)
    n_steps = sweep_steps(theta0, config.theta_target, config.dtheta)
    rng = np.random.default_rng(config.seed)
    values = np.array(init.values, dtype=float)
    R0 = _value(evaluator, values)
    record = FamilyRecord(
        FamilyEntry(theta0, values.copy(), R0, problem.theta(values) - theta0),
        basis=problem.basis,
        dtheta=config.dtheta,
    )
    for k in range(1, n_steps + 1):
        try:
            values, diag = ripv_step(values, problem, config, evaluator, rng, step)
            if config.recorrection_period and k % config.recorrection_period == 0:
                values = _recorrect(values, problem, config)
        except (ArithmeticError, ValueError) as exc:
            raise RipvAborted(f"step {k} failed: {exc}", record) from exc
        theta_k = theta0 + k * step
        if k % config.stride == 0 or k == n_steps:
            R = _value(evaluator, values)
            record.entries.append(FamilyEntry(theta_k, values.copy(), R, problem.theta(values) - theta_k, diag))
        if progress is not None:
            progress(k, n_steps)
    logger.info("ripv: %d steps from %.4f to %.4f", n_steps, theta0, theta0 + n_steps * step)
    return record
