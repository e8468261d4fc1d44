"""Scaled Coulomb N-body dynamics on the torus and their modulated-energy distance to steady Euler flows."""

from .dynamics import (
    EnergyDiagnostics,
    ParticleState,
    energy_diagnostics,
    integrate,
    step_gyrokinetic,
    step_quasineutral,
)
from .errors import (
    CollisionError,
    ConfigError,
    EulerLimitError,
    FitError,
    NumericalError,
    SingularConfigurationError,
    SingularPointError,
)
from .flows import FlowField, eval_grad_u, eval_pressure, eval_U, eval_u, make_flow
from .green import GreenKernel, GreenTable
from .modulated import (
    ModulatedEnergyReport,
    modulated_energy,
    modulated_energy_gyrokinetic,
    modulated_energy_quasineutral,
    weakstar_gap,
)
from .sampling import SamplingConfig, estimate_initial_h2_scaling, sample_initial
from .sweep import SweepConfig, fit_rate, gronwall_envelope_check, run_sweep

__version__ = "0.1.0"
