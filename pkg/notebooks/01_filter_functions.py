"""
Filter functions of a driven qubit
==================================

A detuned qubit driven along x, H = delta/2 sz + Omega(t)/2 sx, picks up
infidelity from slow detuning noise at a rate set by its filter function F(w).
Free evolution is the textbook case: F(w) = sin^2(wT/2) / w^2, with
F(0) = T^2/4.
"""
import math

import numpy as np

from ffqcrl.filterfn import FrequencyGrid, filter_function, robustness_metric
from ffqcrl.montecarlo import sine_reference_pulse
from ffqcrl.noise import default_psd, omega0
from ffqcrl.pulse import evaluate_pulse
from ffqcrl.quantum import SystemModel, TimeGrid, propagate_control

T = 50.0  # ns
grid = TimeGrid(T, 1000)
model = SystemModel.detuned_qubit()
w0 = omega0(T)

# %%
# Free evolution against the closed form.
idle = propagate_control(model, np.zeros(grid.n_steps), grid)
w = np.linspace(0, 4 * w0, 9)
F = filter_function(model, idle, grid, w).values[0]
closed = (T / 2) ** 2 * np.sinc(w * T / (2 * np.pi)) ** 2
for wi, a, b in zip(w / w0, F, closed):
    print(f"w = {wi:4.1f} w0   F = {a:9.4f}   closed form {b:9.4f}")

# %%
# A pi pulse with a plain sine envelope already suppresses the DC lobe.
sine = sine_reference_pulse(math.pi, grid)
driven = propagate_control(model, evaluate_pulse(sine, grid), grid)
print("F(0): idle %.1f, sine pi pulse %.1f" % (
    filter_function(model, idle, grid, [0.0]).values[0, 0],
    filter_function(model, driven, grid, [0.0]).values[0, 0],
))

# %%
# Infidelity is the overlap of F with the noise spectrum. The default spectrum
# has a slow lobe at DC and a bump near 6 w0.
psd = default_psd(T)
bands = FrequencyGrid.default(T)
for label, prop in (("idle", idle), ("sine", driven)):
    curve = filter_function(model, prop, grid, bands)
    print(f"{label:5s} L_robust = {robustness_metric(curve, psd, bands):.4f}")

# %%
# Dump a log-spaced curve for plotting elsewhere.
plot_w = np.geomspace(1e-2 * w0, 10 * w0, 400)
filter_function(model, driven, grid, plot_w).to_csv("filter_sine.csv")
