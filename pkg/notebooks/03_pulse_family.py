"""
Transporting the pulse across rotation angles
=============================================

Starting from the robust pi pulse, each step moves the parameters along the
angle gradient with its robustness-gradient component removed. To first order
the angle advances by exactly dtheta while the robustness metric stays put.

Run 02_initialize_pulse.py first. The full pi -> 2pi sweep is 1571 steps and
takes a couple of minutes.
"""
import math

import numpy as np

from ffqcrl.filterfn import FrequencyGrid
from ffqcrl.noise import default_psd
from ffqcrl.optimize import ControlProblem
from ffqcrl.pulse import PulseParams
from ffqcrl.quantum import TimeGrid
from ffqcrl.ripv import RipvConfig, generate_family

T = 50.0
grid = TimeGrid(T, 1000)
problem = ControlProblem(grid, default_psd(T), FrequencyGrid.default(T), math.pi)
with open("ff-qcrl.json") as fh:
    init = PulseParams.from_json(fh.read())


def report(k, n):
    if k % 250 == 0 or k == n:
        print(f"step {k}/{n}")


record = generate_family(init, problem, RipvConfig(), progress=report)

# %%
# The robustness metric drifts only slowly, and parameters vary smoothly.
R = np.array([e.robustness for e in record.all_entries()])
jumps = np.linalg.norm(np.diff(record.parameters, axis=0), axis=1)
print(f"R: start {R[0]:.4f}, end {R[-1]:.4f}, range [{R.min():.4f}, {R.max():.4f}]")
print(f"worst angle error {max(abs(e.theta_residual) for e in record.entries):.2e} rad")
print(f"largest step / median step = {jumps.max() / np.median(jumps):.2f}")

record.to_csv("family.csv")
with open("family.json", "w") as fh:
    fh.write(record.to_json())
