"""Filter functions of piecewise-constant control and band-limited robustness.

The leading-order noise infidelity is ``(1/2pi) sum_k int F_k(w) S_k(w) dw`` with

    F_k(w) = Tr(P G_k(w) G_k(w)^dagger) / Tr(P),
    G_k(w) = int_0^T H'_k(t) exp(+i w t) dt,

where ``H'_k`` is the toggling-frame noise operator with its projected trace
removed.
"""
from __future__ import annotations

import csv
import functools
from dataclasses import dataclass

import numpy as np

from .noise import NoisePsd
from .quantum import Propagation, SystemModel, TimeGrid, interaction_noise_ops


@dataclass(frozen=True)
class FrequencyGrid:
    """Integration bands in rad/ns.

    With ``mirrored`` set, every band is also integrated over its negative
    image, with ``F`` evaluated at ``-w`` explicitly.
    """

    bands: tuple
    points_per_band: int = 256
    mirrored: bool = True

    def __post_init__(self):
        bands = tuple(sorted((float(lo), float(hi)) for lo, hi in self.bands))
        if not bands:
            raise ValueError("at least one band is required")
        for lo, hi in bands:
            if not lo < hi:
                raise ValueError(f"band ({lo}, {hi}) is empty")
            if lo < 0:
                raise ValueError("bands are given on the positive axis")
        for (_, hi), (lo, _) in zip(bands, bands[1:]):
            if lo < hi:
                raise ValueError("bands overlap")
        if self.points_per_band < 2:
            raise ValueError("points_per_band must be >= 2")
        object.__setattr__(self, "bands", bands)

    @classmethod
    def default(cls, duration: float = 50.0, points_per_band: int = 256) -> "FrequencyGrid":
        """Low band ``(0, w0)`` and high band ``(5.5 w0, 6.5 w0)``."""
        w0 = 2 * np.pi / duration
        return cls(((0.0, w0), (5.5 * w0, 6.5 * w0)), points_per_band)

    def band_omegas(self) -> list:
        """Sample frequencies per band, including the mirrored images when enabled."""
        out = []
        for lo, hi in self.bands:
            w = np.linspace(lo, hi, self.points_per_band)
            out.append(w)
            if self.mirrored:
                out.append(-w[::-1])
        return out

    @property
    def omegas(self) -> np.ndarray:
        return np.concatenate(self.band_omegas())


@dataclass(frozen=True)
class FilterCurve:
    """Sampled filter functions, ``values`` has shape ``(n_noise, n_omega)`` in ns^2."""

    omegas: np.ndarray
    values: np.ndarray

    def to_csv(self, path, channel: int = 0, header_comment: str | None = None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh)
            writer.writerow(["omega_rad_per_ns", "F_ns2"])
            for w, f in zip(self.omegas, self.values[channel]):
                writer.writerow([repr(float(w)), repr(float(f))])


def gauge_transform(H: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Remove the projected trace: ``H - Tr(P H)/Tr(P) * I``. Broadcasts over leading axes."""
    P = np.asarray(P)
    trP = np.trace(P).real
    if abs(trP) < 1e-15:
        raise ValueError("projector has zero trace")
    H = np.asarray(H)
    shift = np.einsum("ij,...ji->...", P, H) / trP
    return H - shift[..., None, None] * np.eye(H.shape[-1])


def fourier_g(samples: np.ndarray, grid: TimeGrid, omega) -> np.ndarray:
    """Midpoint-rule ``sum_m H'(t_m) exp(+i w t_m) dt``.

    ``samples`` has shape ``(..., n_steps, d, d)``; a scalar ``omega`` returns
    ``(..., d, d)`` and an array of frequencies ``(..., n_omega, d, d)``.
    """
    samples = np.asarray(samples)
    omega_arr = np.atleast_1d(np.asarray(omega, dtype=float))
    phases = np.exp(1j * omega_arr[:, None] * grid.times[None, :]) * grid.dt
    G = np.einsum("wm,...mab->...wab", phases, samples)
    return G[..., 0, :, :] if np.ndim(omega) == 0 else G


def toggling_frame_ops(model: SystemModel, propagation: Propagation) -> np.ndarray:
    """Gauge-fixed toggling-frame noise operators, shape ``(n_noise, n_steps, d, d)``."""
    return gauge_transform(interaction_noise_ops(model, propagation), model.projector)


@functools.lru_cache(maxsize=32)
def _kernels(grid: TimeGrid, omegas: tuple) -> tuple:
    """Quadrature kernels ``cos(|w| t_m) dt``, ``sin(|w| t_m) dt`` on the distinct ``|w|``.

    Also returns the index map back to ``omegas`` and their signs.
    """
    w = np.asarray(omegas)
    mags, inverse = np.unique(np.abs(w), return_inverse=True)
    arg = mags[:, None] * grid.times[None, :]
    return np.cos(arg) * grid.dt, np.sin(arg) * grid.dt, inverse, np.sign(w)


@functools.lru_cache(maxsize=8)
def hermitian_basis(dim: int) -> np.ndarray:
    """Orthonormal (Hilbert-Schmidt) basis of ``dim x dim`` Hermitian matrices."""
    basis = []
    for i in range(dim):
        E = np.zeros((dim, dim), dtype=complex)
        E[i, i] = 1
        basis.append(E)
    for i in range(dim):
        for j in range(i + 1, dim):
            E = np.zeros((dim, dim), dtype=complex)
            E[i, j] = E[j, i] = 1 / np.sqrt(2)
            basis.append(E)
            E = np.zeros((dim, dim), dtype=complex)
            E[i, j], E[j, i] = -1j / np.sqrt(2), 1j / np.sqrt(2)
            basis.append(E)
    return np.array(basis)


def filter_values(ops: np.ndarray, P: np.ndarray, grid: TimeGrid, omegas) -> np.ndarray:
    """``F_k(w)`` from gauge-fixed Hermitian operators.

    ``ops`` has shape ``(..., n_noise, n_steps, d, d)``; the result has shape
    ``(..., n_noise, n_omega)``.

    Negative frequencies use ``exp(+i w t) = cos(|w| t) - i sin(|w| t)`` directly;
    no symmetry of ``F`` is assumed.
    """
    ops = np.asarray(ops)
    d = ops.shape[-1]
    C, S, inverse, sign = _kernels(grid, tuple(np.atleast_1d(np.asarray(omegas, dtype=float)).tolist()))
    B = hermitian_basis(d)
    # real coordinates r_a(t) = Tr(B_a H'(t)); G(w) = sum_a g_a(w) B_a
    lead = ops.shape[:-3]
    n_steps = ops.shape[-3]
    # time axis first so one real GEMM handles every batch entry and channel
    coords = np.moveaxis(np.einsum("aij,...mji->...ma", B, ops).real, -2, 0)
    coords = np.ascontiguousarray(coords.reshape(n_steps, -1))
    gc = (C @ coords)[inverse]
    gs = (S @ coords)[inverse]
    g = (gc + 1j * sign[:, None] * gs).reshape((-1,) + lead + (d * d,))
    # Tr(P G G^dagger) = sum_ab g_a conj(g_b) Tr(P B_a B_b)
    M = np.einsum("ij,ajk,bki->ab", P, B, B)
    trP = np.trace(P).real
    F = np.moveaxis(np.einsum("w...a,ab,w...b->w...", g, M, g.conj()).real, 0, -1) / trP
    return np.maximum(F, 0.0)


def filter_function(model: SystemModel, propagation: Propagation, grid: TimeGrid, freq_grid) -> FilterCurve:
    """Filter functions on ``freq_grid`` (a :class:`FrequencyGrid` or an array of frequencies)."""
    omegas = freq_grid.omegas if isinstance(freq_grid, FrequencyGrid) else np.atleast_1d(np.asarray(freq_grid, float))
    ops = toggling_frame_ops(model, propagation)
    return FilterCurve(omegas, filter_values(ops, model.projector, grid, omegas))


def robustness_metric(curve: FilterCurve, psd, freq_grid: FrequencyGrid) -> float:
    """``(1/2pi) sum_k sum_bands trapz(F_k S_k)`` over the declared bands.

    ``psd`` is one :class:`NoisePsd` shared by all channels or a sequence of
    them, one per channel.
    """
    if curve.omegas.shape != freq_grid.omegas.shape or not np.array_equal(curve.omegas, freq_grid.omegas):
        raise ValueError("filter curve and frequency grid are sampled differently")
    psds = [psd] * curve.values.shape[0] if isinstance(psd, NoisePsd) else list(psd)
    if len(psds) != curve.values.shape[0]:
        raise ValueError("one PSD per noise channel is required")
    total = 0.0
    for F, S in zip(curve.values, psds):
        start = 0
        for w in freq_grid.band_omegas():
            stop = start + w.size
            total += np.trapezoid(F[start:stop] * S(w), w)
            start = stop
    return float(total / (2 * np.pi))


def full_spectrum_prediction(model: SystemModel, propagation: Propagation, grid: TimeGrid, psd: NoisePsd,
                             n_points: int = 4096) -> float:
    """Leading-order infidelity integrated over the PSD's whole support on both half-axes."""
    edge = psd.support_edge()
    fg = FrequencyGrid(((0.0, edge),), n_points, mirrored=True)
    return robustness_metric(filter_function(model, propagation, grid, fg), psd, fg)
