"""Multi-band noise spectra and seeded synthesis of stochastic realizations.

Spectra are two-sided, ``S(w) = S(-w)``, with ``E[delta(t)^2] = (1/2pi) int S dw``.
With ``scale = 1`` a spectrum integrates to one over the real line.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quantum import SystemModel, TimeGrid, propagate_total

SHAPES = ("gaussian-lobe", "box")


def omega0(duration: float) -> float:
    """Fundamental angular frequency ``2 pi / T``."""
    return 2 * np.pi / duration


@dataclass(frozen=True)
class PsdComponent:
    shape: str
    center: float
    width: float
    weight: float

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"unknown PSD shape {self.shape!r}; expected one of {SHAPES}")
        if not self.width > 0:
            raise ValueError("PSD component width must be positive")
        if self.weight < 0:
            raise ValueError("PSD component weight must be nonnegative")

    def _one_sided(self, omega):
        x = omega - self.center
        if self.shape == "gaussian-lobe":
            return np.exp(-0.5 * (x / self.width) ** 2) / (np.sqrt(2 * np.pi) * self.width)
        return np.where(np.abs(x) <= self.width / 2, 1.0 / self.width, 0.0)

    def __call__(self, omega):
        # mirrored pair, each half carrying weight/2 of unit-mass profile
        omega = np.asarray(omega, dtype=float)
        return 0.5 * self.weight * (self._one_sided(omega) + self._one_sided(-omega))


@dataclass(frozen=True)
class NoisePsd:
    """Sum of mirrored spectral components times an overall ``scale`` (epsilon^2).

    Component weights are renormalized so the unscaled spectrum has unit integral.
    """

    components: tuple
    scale: float = 1.0

    def __post_init__(self):
        comps = tuple(c if isinstance(c, PsdComponent) else PsdComponent(**c) for c in self.components)
        if not comps:
            raise ValueError("a PSD needs at least one component")
        total = sum(c.weight for c in comps)
        if total <= 0:
            raise ValueError("PSD component weights sum to zero")
        comps = tuple(PsdComponent(c.shape, c.center, c.width, c.weight / total) for c in comps)
        if self.scale < 0:
            raise ValueError("PSD scale must be nonnegative")
        object.__setattr__(self, "components", comps)

    def __call__(self, omega) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        return self.scale * sum(c(omega) for c in self.components)

    def scaled(self, scale: float) -> "NoisePsd":
        return NoisePsd(self.components, scale)

    @property
    def variance(self) -> float:
        """``E[delta^2] = scale / (2 pi)`` by construction."""
        return self.scale / (2 * np.pi)

    def scale_for_rms(self, rms: float) -> float:
        """Scale giving a root-mean-square amplitude ``rms``."""
        return 2 * np.pi * rms**2

    def support_edge(self) -> float:
        """Frequency beyond which the spectrum is negligible (8 widths past the last center)."""
        return max(abs(c.center) + (8 if c.shape == "gaussian-lobe" else 0.5) * c.width for c in self.components)

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "components": [
                {"shape": c.shape, "center": c.center, "width": c.width, "weight": c.weight}
                for c in self.components
            ],
        }


def default_psd(duration: float = 50.0, scale: float = 1.0) -> NoisePsd:
    """Low-frequency lobe plus a secondary bump at ``6 w0`` (80/20 weight split)."""
    w0 = omega0(duration)
    return NoisePsd(
        (
            PsdComponent("gaussian-lobe", 0.0, w0 / 2, 0.8),
            PsdComponent("gaussian-lobe", 6 * w0, w0 / 4, 0.2),
        ),
        scale,
    )


@dataclass(frozen=True)
class NoiseRealization:
    samples: np.ndarray
    seed: int
    rms: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "rms", float(np.sqrt(np.mean(np.asarray(self.samples) ** 2))))


@dataclass(frozen=True)
class FrequencyComb:
    """One-sided comb ``w_m = (m - 1/2) dw`` covering ``(0, w_max]``."""

    spacing: float
    omega_max: float

    @classmethod
    def for_grid(cls, psd: NoisePsd, grid: TimeGrid, refine: int = 8) -> "FrequencyComb":
        # spacing must stay <= 2 pi / (4 T)
        return cls(omega0(grid.duration) / max(refine, 4), psd.support_edge())

    @property
    def omegas(self) -> np.ndarray:
        n = int(np.ceil(self.omega_max / self.spacing))
        return (np.arange(n) + 0.5) * self.spacing

    def amplitudes(self, psd: NoisePsd) -> np.ndarray:
        """``A_m = sqrt(2 S(w_m) dw / pi)``, so that ``sum A_m^2 / 2 = (1/2pi) int S``."""
        return np.sqrt(2 * psd(self.omegas) * self.spacing / np.pi)


def synthesize_batch(psd: NoisePsd, grid: TimeGrid, rng, n_samples: int, comb: FrequencyComb | None = None):
    """``n_samples`` realizations as rows of an array of shape ``(n_samples, n_steps)``."""
    comb = FrequencyComb.for_grid(psd, grid) if comb is None else comb
    rng = np.random.default_rng(rng)
    amps = comb.amplitudes(psd)
    phases = rng.uniform(0.0, 2 * np.pi, size=(n_samples, amps.size))
    arg = comb.omegas[:, None] * grid.times[None, :]
    cos_arg, sin_arg = np.cos(arg), np.sin(arg)
    # A cos(wt + p) = A cos(p) cos(wt) - A sin(p) sin(wt)
    return (amps * np.cos(phases)) @ cos_arg - (amps * np.sin(phases)) @ sin_arg


def synthesize(psd: NoisePsd, grid: TimeGrid, seed: int, comb: FrequencyComb | None = None) -> NoiseRealization:
    """One realization of a Gaussian-like stationary process with spectrum ``psd``."""
    samples = synthesize_batch(psd, grid, np.random.default_rng(seed), 1, comb)[0]
    return NoiseRealization(samples, seed)


def propagate_noisy(model: SystemModel, pulses, realization, grid: TimeGrid) -> np.ndarray:
    """Final propagator under control plus noise.

    ``realization`` is a :class:`NoiseRealization`, or an array of shape
    ``(n_noise, n_steps)`` / ``(batch, n_noise, n_steps)``.
    """
    samples = realization.samples if isinstance(realization, NoiseRealization) else realization
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[None, :]
    if samples.shape[-1] != grid.n_steps:
        raise ValueError(f"noise has {samples.shape[-1]} samples, grid has {grid.n_steps} steps")
    return propagate_total(model, pulses, samples, grid)


def tone_batch(amplitude: float, omega: float, grid: TimeGrid, rng, n_samples: int) -> np.ndarray:
    """Single-frequency noise ``A cos(w t + p)`` with uniform random phase ``p``, one row per sample.

    Its two-sided spectrum is ``(pi A^2 / 2) [delta(w - w1) + delta(w + w1)]``.
    """
    phases = np.random.default_rng(rng).uniform(0.0, 2 * np.pi, size=(n_samples, 1))
    return amplitude * np.cos(omega * grid.times[None, :] + phases)
