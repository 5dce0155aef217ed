"""
Monte Carlo check of robustness
===============================

Synthesize noise traces from the spectrum, propagate, and average the gate
fidelity at eight strengths. Every pulse sees the same traces at a given
strength, so differences between pulses are paired.

Needs the outputs of 02 and 03.
"""
import math

import numpy as np

from ffqcrl.montecarlo import fit_loglog_slope, run_sweep, sine_reference_pulse, strength_levels
from ffqcrl.noise import default_psd
from ffqcrl.pulse import PulseParams
from ffqcrl.quantum import TimeGrid
from ffqcrl.ripv import FamilyRecord

T = 50.0
grid = TimeGrid(T, 1000)
psd = default_psd(T)


def load(path):
    with open(path) as fh:
        return PulseParams.from_json(fh.read())


pulses = {
    "ff-qcrl": (load("ff-qcrl.json"), math.pi),
    "baseline": (load("static-baseline.json"), math.pi),
    "sine": (sine_reference_pulse(math.pi, grid), math.pi),
}
result = run_sweep(pulses, psd, strength_levels(), samples=500, seed=0, grid=grid)
for label in result.labels:
    slope, _, r2 = fit_loglog_slope(result, label)
    inf = result.curve(label)["mean_infidelity"]
    print(f"{label:9s} slope {slope:.3f} (r2 {r2:.4f})  1-F from {inf[0]:.2e} to {inf[-1]:.2e}")
result.to_csv("mc.csv")

# %%
# Family members at eleven angles, at the strongest noise level.
with open("family.json") as fh:
    family = FamilyRecord.from_json(fh.read())
members = {}
for theta in np.linspace(math.pi, 2 * math.pi, 11):
    e = family.nearest(theta)
    members[f"{e.theta / math.pi:.2f}pi"] = (family.pulse(e), e.theta)
strongest = run_sweep(members, psd, [0.04], samples=500, seed=0, grid=grid)
for label in strongest.labels:
    print(f"theta = {label:7s} <F> = {strongest.curve(label)['mean_fidelity'][0]:.5f}")
