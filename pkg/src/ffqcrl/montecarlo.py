"""Monte Carlo validation of pulses under synthesized stochastic detuning noise."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .noise import NoisePsd, synthesize_batch
from .optimize import sine_pulse
from .pulse import PulseParams, evaluate_pulse
from .quantum import SystemModel, TimeGrid, infidelity, propagate_total, rx

DEFAULT_LEVELS = tuple(np.geomspace(0.005, 0.04, 8))


def strength_levels(lo: float = 0.005, hi: float = 0.04, n: int = 8) -> np.ndarray:
    """Log-spaced target RMS strengths in rad/ns."""
    return np.geomspace(lo, hi, n)


def sine_reference_pulse(theta: float, grid: TimeGrid, n_harmonics: int = 3) -> PulseParams:
    """Plain windowed pulse with exact area ``theta`` and no robustness shaping."""
    return sine_pulse(theta, grid, n_harmonics)


@dataclass(frozen=True)
class McRow:
    label: str
    level: int
    target_rms: float
    delta_rms_mean: float
    mean_fidelity: float
    std_fidelity: float
    n: int
    seed: int


@dataclass
class McSweepResult:
    rows: list = field(default_factory=list)

    @property
    def labels(self) -> list:
        return list(dict.fromkeys(r.label for r in self.rows))

    def curve(self, label: str) -> dict:
        rows = sorted((r for r in self.rows if r.label == label), key=lambda r: r.level)
        return {
            "delta_rms": np.array([r.delta_rms_mean for r in rows]),
            "mean_fidelity": np.array([r.mean_fidelity for r in rows]),
            "std_fidelity": np.array([r.std_fidelity for r in rows]),
            "mean_infidelity": 1.0 - np.array([r.mean_fidelity for r in rows]),
        }

    def to_csv(self, path, header_comment: str | None = None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            writer = csv.writer(fh)
            writer.writerow(["pulse_label", "strength_level", "delta_rms_mean", "mean_fidelity", "std_fidelity", "n",
                             "seed"])
            for r in self.rows:
                writer.writerow([r.label, r.level, repr(r.delta_rms_mean), repr(r.mean_fidelity),
                                 repr(r.std_fidelity), r.n, r.seed])


def gate_fidelities(model: SystemModel, pulse_samples, noise: np.ndarray, grid: TimeGrid, theta: float,
                    chunk: int = 250) -> np.ndarray:
    """Fidelity to ``R_x(theta)`` for each noise row (single noise channel)."""
    target = rx(theta)
    out = []
    for start in range(0, noise.shape[0], chunk):
        U = propagate_total(model, pulse_samples, noise[start:start + chunk, None, :], grid)
        out.append(1.0 - infidelity(target, U))
    return np.concatenate(out) if out else np.empty(0)


def noise_batches(psd: NoisePsd, levels, samples: int, seed: int, grid: TimeGrid):
    """Yield ``(target_rms, level_seed, noise)`` per level; each level has its own spawned seed."""
    level_seeds = np.random.SeedSequence(seed).generate_state(len(levels))
    for rms, level_seed in zip(levels, level_seeds):
        noise_psd = psd.scaled(psd.scale_for_rms(rms))
        yield float(rms), int(level_seed), synthesize_batch(noise_psd, grid, np.random.default_rng(int(level_seed)),
                                                            samples)


def run_sweep(pulses: dict, psd: NoisePsd, levels, samples: int = 500, seed: int = 0,
              grid: TimeGrid = TimeGrid(50.0, 1000), model: SystemModel | None = None,
              window: str = "sine") -> McSweepResult:
    """Average fidelity versus noise strength for several labelled pulses.

    ``pulses`` maps a label to ``(PulseParams, target_theta)``. Every label sees
    the same noise batch at a given level (common random numbers); each level
    draws from its own seed spawned from ``seed``.
    """
    model = SystemModel.detuned_qubit() if model is None else model
    result = McSweepResult()
    for i, (rms, level_seed, noise) in enumerate(noise_batches(psd, levels, samples, seed, grid)):
        delta_rms = float(np.mean(np.sqrt(np.mean(noise**2, axis=1))))
        for label, (params, theta) in pulses.items():
            fid = gate_fidelities(model, evaluate_pulse(params, grid, window), noise, grid, theta)
            result.rows.append(
                McRow(label, i, rms, delta_rms, float(fid.mean()), float(fid.std()), samples, level_seed)
            )
    return result


def fit_loglog_slope(result: McSweepResult, label: str, floor: float = 0.0) -> tuple[float, float, float]:
    """Least-squares line through ``log10(1 - <F>)`` against ``log10(mean delta_rms)``.

    Levels whose mean infidelity is at or below ``floor`` are dropped; any
    remaining non-positive infidelity is an error.
    """
    c = result.curve(label)
    x, y = c["delta_rms"], c["mean_infidelity"]
    keep = (y > floor) if floor > 0 else np.ones_like(y, dtype=bool)
    x, y = x[keep], y[keep]
    if np.any(y <= 0) or np.any(x <= 0):
        raise ValueError(f"non-positive infidelity or strength for {label!r}")
    if x.size < 2:
        raise ValueError("need at least two levels to fit a slope")
    lx, ly = np.log10(x), np.log10(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    r2 = 1.0 - np.sum(resid**2) / np.sum((ly - ly.mean()) ** 2)
    return float(slope), float(intercept), float(r2)


def slopes_to_json(result: McSweepResult, floor: float = 0.0) -> str:
    out = {}
    for label in result.labels:
        slope, intercept, r2 = fit_loglog_slope(result, label, floor)
        out[label] = {"slope": slope, "intercept": intercept, "r2": r2}
    return json.dumps(out, indent=2)
