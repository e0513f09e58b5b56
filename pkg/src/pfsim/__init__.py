"""Finite-volume simulator for a conserved Penrose-Fife phase-field system.

The package couples a fourth-order conserved order-parameter equation to
an inverse-temperature equation under no-flux boundary conditions, with
time stepping that conserves the order-parameter mean and the enthalpy
exactly up to solver residuals, a steady-state solver for the constrained
stationary problem, and diagnostics for the energy-dissipation identity
and the approach to equilibrium.
"""

from .diagnostics import (ConvergenceDecision, DecayFitReport, Ledger,
                          convergence_detector, decay_fit, record,
                          spatial_spread)
from .errors import (ConfigError, ConstraintInfeasibleError, DecayFitError,
                     GridMismatchError, LedgerError, NewtonDivergedError,
                     NonFiniteError, PositivityLostError, SimulationError)
from .grid import (Grid, grad_sq_norm, inner, integrate, laplacian_matrix,
                   mean, neumann_laplacian)
from .model import (HypothesisCheck, HypothesisReport, ModelFunctions,
                    check_hypotheses, make_default_model, make_model)
from .state import (FunctionalGradient, State, chemical_potential,
                    conserved_f, energy, lagrangian, lagrangian_gradient,
                    lagrangian_hessian_action)
from .steady import (SteadyProblem, SteadyState, constant_branch,
                     solve_steady, stability_indicator)
from .stepper import RunSummary, StepResult, StepperConfig, run, step

__version__ = "0.1.0"

__all__ = [
    "Grid", "neumann_laplacian", "integrate", "mean", "inner", "grad_sq_norm",
    "laplacian_matrix",
    "ModelFunctions", "make_default_model", "make_model", "check_hypotheses",
    "HypothesisCheck", "HypothesisReport",
    "State", "FunctionalGradient", "chemical_potential", "energy",
    "conserved_f", "lagrangian", "lagrangian_gradient",
    "lagrangian_hessian_action",
    "StepperConfig", "StepResult", "RunSummary", "step", "run",
    "SteadyProblem", "SteadyState", "constant_branch", "solve_steady",
    "stability_indicator",
    "Ledger", "record", "ConvergenceDecision", "convergence_detector",
    "spatial_spread", "DecayFitReport", "decay_fit",
    "SimulationError", "NewtonDivergedError", "PositivityLostError",
    "NonFiniteError", "ConstraintInfeasibleError", "GridMismatchError",
    "ConfigError", "LedgerError", "DecayFitError",
    "__version__",
]
