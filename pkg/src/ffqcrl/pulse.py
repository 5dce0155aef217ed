"""Fourier-parameterized control pulses and their quadratures.

A pulse with ``N`` harmonics is

    Omega(t) = W(t) * (a_0 + sum_l a_l cos(2 l pi t / T + phi_l))

in the amplitude-phase form, or with ``a_l cos(.) + b_l sin(.)`` terms in the
cosine-sine form. Both forms flatten to ``2N + 1`` numbers.
"""
from __future__ import annotations

import functools
import json
from dataclasses import dataclass

import numpy as np

from .quantum import TimeGrid

AMP_PHASE = "amp-phase"
COS_SIN = "cos-sin"
BASES = (AMP_PHASE, COS_SIN)
WINDOWS = ("sine", "none")


@dataclass(frozen=True)
class PulseParams:
    """Flat coefficient vector plus its basis tag.

    ``amp-phase`` order is ``(a_0, a_1..a_N, phi_1..phi_N)``;
    ``cos-sin`` order is ``(a_0, a_1..a_N, b_1..b_N)``.
    Phases are kept unwrapped.
    """

    values: np.ndarray
    basis: str = AMP_PHASE

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if values.size % 2 != 1:
            raise ValueError(f"pulse vector must have odd length 2N+1, got {values.size}")
        if self.basis not in BASES:
            raise ValueError(f"unknown basis {self.basis!r}; expected one of {BASES}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def n_harmonics(self) -> int:
        return (self.values.size - 1) // 2

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def a0(self) -> float:
        return float(self.values[0])

    @classmethod
    def amp_phase(cls, a0, amplitudes=(), phases=()) -> "PulseParams":
        amplitudes = np.atleast_1d(np.asarray(amplitudes, dtype=float))
        phases = np.atleast_1d(np.asarray(phases, dtype=float))
        if amplitudes.shape != phases.shape:
            raise ValueError("amplitudes and phases differ in length")
        return cls(np.concatenate([[a0], amplitudes, phases]), AMP_PHASE)

    @classmethod
    def cos_sin(cls, a0, a=(), b=()) -> "PulseParams":
        a = np.atleast_1d(np.asarray(a, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if a.shape != b.shape:
            raise ValueError("cosine and sine coefficient lists differ in length")
        return cls(np.concatenate([[a0], a, b]), COS_SIN)

    def with_values(self, values) -> "PulseParams":
        return PulseParams(values, self.basis)

    def harmonic_coefficients(self) -> tuple[float, np.ndarray, np.ndarray]:
        """``(a_0, alpha, beta)`` with ``Omega = W (a_0 + sum alpha_l cos + beta_l sin)``."""
        N = self.n_harmonics
        a0, first, second = self.values[0], self.values[1:N + 1], self.values[N + 1:]
        if self.basis == COS_SIN:
            return a0, first.copy(), second.copy()
        return a0, first * np.cos(second), -first * np.sin(second)

    def to_cos_sin(self) -> "PulseParams":
        a0, alpha, beta = self.harmonic_coefficients()
        return PulseParams.cos_sin(a0, alpha, beta)

    def to_amp_phase(self) -> "PulseParams":
        if self.basis == AMP_PHASE:
            return self
        a0, alpha, beta = self.harmonic_coefficients()
        return PulseParams.amp_phase(a0, np.hypot(alpha, beta), np.arctan2(-beta, alpha))

    def to_json(self) -> str:
        return json.dumps({"basis": self.basis, "values": self.values.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "PulseParams":
        data = json.loads(text)
        return cls(data["values"], data.get("basis", AMP_PHASE))


def window_values(window: str, grid: TimeGrid) -> np.ndarray:
    if window == "sine":
        return np.sin(np.pi * grid.times / grid.duration)
    if window == "none":
        return np.ones(grid.n_steps)
    raise ValueError(f"unknown window {window!r}; expected one of {WINDOWS}")


@functools.lru_cache(maxsize=16)
def harmonic_basis(n_harmonics: int, grid: TimeGrid, window: str = "sine") -> np.ndarray:
    """Windowed cos-sin basis functions, shape ``(2N+1, n_steps)``.

    Row order matches the cos-sin flat vector, so ``basis.T @ c`` gives the pulse.
    """
    t = grid.times
    l = np.arange(1, n_harmonics + 1)[:, None]
    arg = 2 * np.pi * l * t / grid.duration
    rows = np.vstack([np.ones((1, t.size)), np.cos(arg), np.sin(arg)]) * window_values(window, grid)
    rows.flags.writeable = False
    return rows


def evaluate_pulse(params: PulseParams, grid: TimeGrid, window: str = "sine") -> np.ndarray:
    """Pulse samples at the grid midpoints."""
    return evaluate_batch(params.values, params.basis, grid, window)


def evaluate_batch(values, basis: str, grid: TimeGrid, window: str = "sine") -> np.ndarray:
    """Pulse samples for a stack of flat parameter vectors, shape ``(..., n_steps)``."""
    values = np.asarray(values, dtype=float)
    N = (values.shape[-1] - 1) // 2
    first, second = values[..., 1:N + 1], values[..., N + 1:]
    if basis == AMP_PHASE:
        first, second = first * np.cos(second), -first * np.sin(second)
    coeffs = np.concatenate([values[..., :1], first, second], axis=-1)
    return coeffs @ harmonic_basis(N, grid, window)


def theta_actual(params: PulseParams, grid: TimeGrid, window: str = "sine") -> float:
    """Rotation angle realized by a ``sigma_x / 2`` drive: midpoint-rule integral of the pulse."""
    return float(np.sum(evaluate_pulse(params, grid, window)) * grid.dt)


def theta_gradient(params: PulseParams, grid: TimeGrid, window: str = "sine") -> np.ndarray:
    """Exact derivative of :func:`theta_actual` with respect to the flat parameter vector."""
    integrals = harmonic_basis(params.n_harmonics, grid, window).sum(axis=1) * grid.dt
    N = params.n_harmonics
    I0, Ic, Is = integrals[0], integrals[1:N + 1], integrals[N + 1:]
    if params.basis == COS_SIN:
        return integrals
    amp, phase = params.values[1:N + 1], params.values[N + 1:]
    # theta = a0 I0 + sum a_l (cos(phi) Ic - sin(phi) Is)
    d_amp = np.cos(phase) * Ic - np.sin(phase) * Is
    d_phase = -amp * (np.sin(phase) * Ic + np.cos(phase) * Is)
    return np.concatenate([[I0], d_amp, d_phase])


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def amp_penalty(samples, grid: TimeGrid):
    """Midpoint-rule integral of the squared pulse (last axis is time)."""
    samples = np.asarray(samples, dtype=float)
    return _scalar_or_array(np.sum(samples**2, axis=-1) * grid.dt)


def smooth_penalty(samples, grid: TimeGrid):
    """Integral of the squared pulse slope.

    Central differences in the interior, one-sided at both ends.
    """
    samples = np.asarray(samples, dtype=float)
    if grid.n_steps < 3 or samples.shape[-1] < 3:
        raise ValueError("smooth_penalty needs at least 3 grid steps")
    slope = np.gradient(samples, grid.dt, axis=-1, edge_order=1)
    return _scalar_or_array(np.sum(slope**2, axis=-1) * grid.dt)
