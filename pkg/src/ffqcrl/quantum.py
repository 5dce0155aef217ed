"""Small dense operators, piecewise-constant propagation and gate infidelity.

Time is measured in nanoseconds and Hamiltonians in rad/ns, so a step
propagator is ``exp(-1j * H * dt)`` with no extra factors.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SIGMA_I = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

HERMITIAN_ATOL = 1e-12


def is_hermitian(M: np.ndarray, atol: float = HERMITIAN_ATOL) -> bool:
    return bool(np.allclose(M, np.swapaxes(M, -1, -2).conj(), rtol=0.0, atol=atol))


def rx(theta: float) -> np.ndarray:
    """Target rotation ``exp(-i theta sigma_x / 2)``."""
    return np.cos(theta / 2) * SIGMA_I - 1j * np.sin(theta / 2) * SIGMA_X


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on ``[0, T]`` with pulses sampled at step midpoints."""

    duration: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 2:
            raise ValueError(f"n_steps must be >= 2, got {self.n_steps}")
        if not self.duration > 0:
            raise ValueError(f"duration must be positive, got {self.duration}")

    @property
    def dt(self) -> float:
        return self.duration / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return (np.arange(self.n_steps) + 0.5) * self.dt


@dataclass(frozen=True)
class SystemModel:
    """Drift, control and noise operators plus the fidelity projector."""

    drift: np.ndarray
    controls: tuple
    noise_ops: tuple
    projector: np.ndarray = field(default=None)

    def __post_init__(self):
        drift = np.asarray(self.drift, dtype=complex)
        dim = drift.shape[0]
        controls = tuple(np.asarray(c, dtype=complex) for c in self.controls)
        noise_ops = tuple(np.asarray(n, dtype=complex) for n in self.noise_ops)
        P = np.eye(dim, dtype=complex) if self.projector is None else np.asarray(self.projector, dtype=complex)
        for name, op in [("drift", drift), ("projector", P)] + [("control", c) for c in controls] + [
            ("noise", n) for n in noise_ops
        ]:
            if op.shape != (dim, dim):
                raise ValueError(f"{name} operator has shape {op.shape}, expected {(dim, dim)}")
            if not is_hermitian(op):
                raise ValueError(f"{name} operator is not Hermitian")
        if not np.allclose(P @ P, P, atol=1e-12):
            raise ValueError("projector is not idempotent")
        if np.trace(P).real <= 0:
            raise ValueError("projector has zero trace")
        for attr, value in [("drift", drift), ("controls", controls), ("noise_ops", noise_ops), ("projector", P)]:
            object.__setattr__(self, attr, value)

    @property
    def dim(self) -> int:
        return self.drift.shape[0]

    @classmethod
    def detuned_qubit(cls) -> "SystemModel":
        """Single qubit driven by ``Omega(t) sigma_x / 2`` with detuning noise ``delta(t) sigma_z / 2``."""
        return cls(np.zeros((2, 2)), (SIGMA_X / 2,), (SIGMA_Z / 2,))

    def hamiltonians(self, pulses: np.ndarray, noise: np.ndarray | None = None) -> np.ndarray:
        """Stack of step Hamiltonians.

        ``pulses`` has shape ``(..., n_controls, n_steps)``; ``noise`` has shape
        ``(..., n_noise, n_steps)``. Leading batch axes broadcast.
        """
        pulses = np.atleast_2d(np.asarray(pulses, dtype=float))
        if pulses.shape[-2] != len(self.controls):
            raise ValueError(f"got {pulses.shape[-2]} pulse channels for {len(self.controls)} controls")
        H = self.drift + np.einsum("...jm,jab->...mab", pulses, np.array(self.controls))
        if noise is not None:
            noise = np.asarray(noise, dtype=float)
            if noise.shape[-2] != len(self.noise_ops):
                raise ValueError(f"got {noise.shape[-2]} noise channels for {len(self.noise_ops)} noise operators")
            if noise.shape[-1] != H.shape[-3]:
                raise ValueError("noise and pulse sample counts differ")
            H = H + np.einsum("...km,kab->...mab", noise, np.array(self.noise_ops))
        return H


def _expm_batch(H: np.ndarray, dt) -> np.ndarray:
    """``exp(-i H dt)`` for a stack of Hermitian matrices (no validation)."""
    dim = H.shape[-1]
    if dim == 2:
        # H = h0 I + h.sigma  ->  exp(-i h0 dt) (cos(|h|dt) I - i sin(|h|dt) h.sigma/|h|)
        h0 = 0.5 * (H[..., 0, 0] + H[..., 1, 1]).real
        hz = 0.5 * (H[..., 0, 0] - H[..., 1, 1]).real
        hx = H[..., 1, 0].real
        hy = H[..., 1, 0].imag
        norm = np.sqrt(hx**2 + hy**2 + hz**2)
        a = norm * dt
        c = np.cos(a)
        sinc = dt * np.sinc(a / np.pi)  # sin(a)/|h|, finite at |h| = 0
        phase = np.exp(-1j * h0 * dt)
        U = np.empty(H.shape, dtype=complex)
        U[..., 0, 0] = c - 1j * sinc * hz
        U[..., 1, 1] = c + 1j * sinc * hz
        U[..., 0, 1] = -1j * sinc * (hx - 1j * hy)
        U[..., 1, 0] = -1j * sinc * (hx + 1j * hy)
        return U * phase[..., None, None]
    w, V = np.linalg.eigh(H)
    return (V * np.exp(-1j * w * dt)[..., None, :]) @ np.swapaxes(V, -1, -2).conj()


def expm_hermitian(H: np.ndarray, dt: float) -> np.ndarray:
    """Return ``exp(-i H dt)`` for a Hermitian matrix ``H``.

    Two-level systems use the closed-form Pauli decomposition, larger ones an
    eigendecomposition.
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    if not is_hermitian(H):
        raise ValueError("expm_hermitian requires a Hermitian matrix; max |H - H^dagger| = "
                         f"{np.abs(H - H.conj().T).max():.3e}")
    if not np.isfinite(dt):
        raise ValueError("dt must be finite")
    return _expm_batch(H, dt)


def cumulative_product(U: np.ndarray) -> np.ndarray:
    """Time-ordered running products ``U[m] @ ... @ U[0]`` along axis ``-3``.

    Log-depth doubling scan, so a thousand steps cost ten batched matmuls.
    """
    out = np.array(U, copy=True)
    n = out.shape[-3]
    shift = 1
    while shift < n:
        out[..., shift:, :, :] = out[..., shift:, :, :] @ out[..., :-shift, :, :]
        shift *= 2
    return out


def ordered_product(U: np.ndarray) -> np.ndarray:
    """Full time-ordered product ``U[-1] @ ... @ U[0]`` along axis ``-3`` (pairwise tree)."""
    U = np.asarray(U)
    while U.shape[-3] > 1:
        if U.shape[-3] % 2:
            eye = np.broadcast_to(np.eye(U.shape[-1], dtype=U.dtype), U.shape[:-3] + (1,) + U.shape[-2:])
            U = np.concatenate([U, eye], axis=-3)
        U = U[..., 1::2, :, :] @ U[..., 0::2, :, :]
    return U[..., 0, :, :]


@dataclass(frozen=True)
class Propagation:
    """Control propagators on a :class:`TimeGrid`.

    ``ends[m]`` is ``U_ctrl`` after step ``m`` (so ``ends[-1] = U_ctrl(T)``);
    ``midpoints[m]`` is ``U_ctrl`` at the sampling node ``t_m``. Batched
    pulses add leading axes in front of the step axis.
    """

    ends: np.ndarray
    midpoints: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.ends[..., -1, :, :]


def propagate_control(model: SystemModel, pulses, grid: TimeGrid) -> Propagation:
    """Piecewise-constant control evolution, later factors multiplied on the left."""
    pulses = np.atleast_2d(np.asarray(pulses, dtype=float))
    if pulses.shape[-1] != grid.n_steps:
        raise ValueError(f"pulse has {pulses.shape[-1]} samples, grid has {grid.n_steps} steps")
    H = model.hamiltonians(pulses)
    steps = _expm_batch(H, grid.dt)
    ends = cumulative_product(steps)
    halves = _expm_batch(H, grid.dt / 2)
    midpoints = halves.copy()
    midpoints[..., 1:, :, :] = halves[..., 1:, :, :] @ ends[..., :-1, :, :]
    return Propagation(ends, midpoints)


def propagate_total(model: SystemModel, pulses, noise, grid: TimeGrid) -> np.ndarray:
    """Final propagator(s) for control plus noise; ``noise`` may carry leading batch axes."""
    pulses = np.atleast_2d(np.asarray(pulses, dtype=float))
    if pulses.shape[-1] != grid.n_steps:
        raise ValueError(f"pulse has {pulses.shape[-1]} samples, grid has {grid.n_steps} steps")
    H = model.hamiltonians(pulses, noise)
    return ordered_product(_expm_batch(H, grid.dt))


def infidelity(U1: np.ndarray, U2: np.ndarray, P: np.ndarray | None = None) -> np.ndarray:
    """``1 - |Tr(P U1^dagger U2) / Tr(P)|^2``, invariant under global phases.

    Broadcasts over leading axes of ``U1``/``U2``.
    """
    U1 = np.asarray(U1)
    U2 = np.asarray(U2)
    dim = U1.shape[-1]
    if U2.shape[-1] != dim:
        raise ValueError("dimension mismatch")
    P = np.eye(dim) if P is None else np.asarray(P)
    trP = np.trace(P).real
    if abs(trP) < 1e-15:
        raise ValueError("projector has zero trace")
    # Tr(P A^dagger B) = sum_ij (P A^dagger)_ij B_ji
    overlap = np.einsum("ij,...kj,...ki->...", P, U1.conj(), U2) / trP
    return np.clip(1.0 - np.abs(overlap) ** 2, 0.0, 1.0)


def interaction_noise_ops(model: SystemModel, propagation: Propagation) -> np.ndarray:
    """Toggling-frame noise operators at the midpoint nodes.

    Returns shape ``(..., n_noise, n_steps, d, d)`` with entries
    ``U^dagger(t_m) H_n U(t_m)``.
    """
    U = propagation.midpoints
    ops = np.array(model.noise_ops)
    left = np.einsum("...mba,kbc->...kmac", U.conj(), ops)
    return left @ U[..., None, :, :, :]
