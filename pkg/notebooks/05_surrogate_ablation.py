"""
A circuit surrogate for the robustness metric
=============================================

A 6-qubit, 2-block variational circuit learns the map from pulse parameters to
the robustness metric on points scattered around the exact family. Its input
gradient then stands in for the finite-difference gradient inside the sweep.

The ablation compares four update rules on the way from pi to 1.5 pi: exact
projection, surrogate projection, no projection, and projection against a
random direction.

Needs the outputs of 02 and 03. Training takes a minute or two.
"""
import math

import numpy as np

from ffqcrl.filterfn import FrequencyGrid
from ffqcrl.noise import default_psd
from ffqcrl.optimize import ControlProblem
from ffqcrl.pulse import PulseParams
from ffqcrl.quantum import TimeGrid
from ffqcrl.ripv import ExactEvaluator, FamilyRecord
from ffqcrl.surrogate import TrainConfig, ablation, sample_dataset, train

T = 50.0
grid = TimeGrid(T, 1000)
psd = default_psd(T)
problem = ControlProblem(grid, psd, FrequencyGrid.default(T), math.pi)
with open("family.json") as fh:
    family = FamilyRecord.from_json(fh.read())
with open("ff-qcrl.json") as fh:
    init = PulseParams.from_json(fh.read())

data = sample_dataset(family, problem, n=512, seed=0).with_split(TrainConfig(), seed=0)
model, rep = train(data, TrainConfig(), seed=0)
print(f"stopped after {rep.epochs} epochs (best {rep.best_epoch}), test mse {rep.test_mse:.3f} (standardized)")

# %%
# How well does the surrogate gradient point? Cosine against the exact one.
exact = ExactEvaluator(problem)
test = np.flatnonzero(data.split == "test")[:32]
cos = [np.dot(a, b) / np.linalg.norm(a) / np.linalg.norm(b)
       for a, b in ((model.input_gradient(data.inputs[i]), exact.gradient(data.inputs[i])) for i in test)]
print(f"mean cosine similarity {np.mean(cos):.3f}")

# %%
result = ablation(init, problem, model, psd, [0.01, 0.02, 0.04])
for strategy, level, delta, fid, runs in result.rows:
    print(f"{strategy:17s} delta_rms {delta:.4f}  <F> = {fid:.5f}  ({runs} run{'s' if runs > 1 else ''})")
result.to_csv("ablation.csv")
