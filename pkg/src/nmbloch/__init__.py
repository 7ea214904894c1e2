"""Noiseless hierarchy solver for non-Markovian spin-boson dynamics.

The deterministic core propagates the Bloch vector of a spin coupled
through sigma_x to a bosonic bath with an exponential correlation kernel,
using a ladder of 3x3 matrix equations with no stochastic sampling.  Two
independent checks ship alongside it: a Monte Carlo solver for the
equivalent colored-noise trajectory equation, and a brute-force
spin (x) Fock-space Schroedinger integrator over a discretized bath.
"""

__version__ = "0.1.0"

from .correlations import (
    ExponentialKernel,
    FrequencyGrid,
    KernelFit,
    ThermalKernelSpec,
    eval_kernel,
    eval_thermal_kernel,
    fit_exponential,
    hamiltonian_shift_v,
    kernel_from_json,
    thermal_occupation,
)
from .errors import (
    ConfigurationError,
    DiscretizationError,
    FitError,
    IntegrationError,
    KernelError,
    ModelInadequacyError,
    NmblochError,
)
from .finite_temperature import ThermofieldMap, build_thermofield, solve_finite_T, thermal_kernel_from_map
from .hierarchy import (
    HierarchyState,
    Q0Series,
    SystemSpec,
    hierarchy_rhs,
    markov_limit_reference,
    propagate,
    q0_series,
)
from .oracle import BathDiscretization, discretize, evolve_exact, with_cutoff
from .series import TimeSeries
from .stochastic import NoisePath, ensemble_mean, generate_noise, trajectory

__all__ = [
    "__version__",
    "BathDiscretization",
    "ConfigurationError",
    "DiscretizationError",
    "ExponentialKernel",
    "FitError",
    "FrequencyGrid",
    "HierarchyState",
    "IntegrationError",
    "KernelError",
    "KernelFit",
    "ModelInadequacyError",
    "NmblochError",
    "NoisePath",
    "Q0Series",
    "SystemSpec",
    "ThermalKernelSpec",
    "ThermofieldMap",
    "TimeSeries",
    "build_thermofield",
    "discretize",
    "ensemble_mean",
    "eval_kernel",
    "eval_thermal_kernel",
    "evolve_exact",
    "fit_exponential",
    "generate_noise",
    "hamiltonian_shift_v",
    "hierarchy_rhs",
    "kernel_from_json",
    "markov_limit_reference",
    "propagate",
    "q0_series",
    "solve_finite_T",
    "thermal_kernel_from_map",
    "thermal_occupation",
    "trajectory",
    "with_cutoff",
]
