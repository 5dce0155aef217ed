"""Filter-function robust control pulses for single-qubit rotations, and their transport across gate angles."""
from .filterfn import FilterCurve, FrequencyGrid, filter_function, full_spectrum_prediction, robustness_metric
from .montecarlo import McSweepResult, fit_loglog_slope, run_sweep, sine_reference_pulse, strength_levels
from .noise import NoisePsd, default_psd, omega0, synthesize
from .optimize import (
    ControlProblem,
    CostWeights,
    NumericalFailure,
    OptimizeReport,
    gradient,
    initialize,
    minimize,
    quasi_static_baseline,
    total_cost,
)
from .pulse import PulseParams, evaluate_pulse, theta_actual
from .quantum import SystemModel, TimeGrid, infidelity, propagate_control, propagate_total, rx
from .ripv import FamilyRecord, RipvConfig, generate_family, project_direction
from .surrogate import TrainConfig, VqcModel, ablation, train

__version__ = "0.1.0"
