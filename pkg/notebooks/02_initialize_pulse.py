"""
Optimizing a robust pi pulse
============================

The cost is gate error plus a weighted overlap of the filter function with the
noise spectrum, plus small amplitude and smoothness penalties. A static-noise
optimum (only the lowest frequencies count) is the baseline; the full-spectrum
optimum starts from it.

This takes a few minutes on one core.
"""
import math

from ffqcrl.filterfn import FrequencyGrid, filter_function, robustness_metric
from ffqcrl.noise import default_psd, omega0
from ffqcrl.optimize import ControlProblem, initialize
from ffqcrl.pulse import evaluate_pulse, theta_actual
from ffqcrl.quantum import SystemModel, TimeGrid, propagate_control

T = 50.0
grid = TimeGrid(T, 1000)
psd = default_psd(T)
problem = ControlProblem(grid, psd, FrequencyGrid.default(T), math.pi)

baseline, ff = initialize(problem)
print("baseline:", baseline.stop_reason, baseline.iterations, "iterations")
print("ff-qcrl: ", ff.stop_reason, ff.iterations, "iterations")

# %%
# Compare the two pulses band by band.
w0 = omega0(T)
model = SystemModel.detuned_qubit()


def band(params, lo, hi):
    fg = FrequencyGrid(((lo, hi),))
    prop = propagate_control(model, evaluate_pulse(params, grid), grid)
    return robustness_metric(filter_function(model, prop, grid, fg), psd, fg)


for label, rep in (("baseline", baseline), ("ff-qcrl", ff)):
    p = rep.params
    print(f"{label:9s} theta = {theta_actual(p, grid):.12f}  "
          f"low band {band(p, 0, w0):.4f}  high band {band(p, 5.5 * w0, 6.5 * w0):.5f}")

# %%
# Keep the pulses for the next scripts.
with open("ff-qcrl.json", "w") as fh:
    fh.write(ff.params.to_json())
with open("static-baseline.json", "w") as fh:
    fh.write(baseline.params.to_json())
ff.trace_to_csv("ff-qcrl_trace.csv")
