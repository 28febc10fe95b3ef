"""Two-species crowd-motion solver based on JKO time stepping.

Each outer time step advances a pair of densities by minimizing
``sum_i W2^2(rho_i, rho_i^k)/(2h) + E(rho_1, rho_2)`` where the energy couples
the species through a common congestion term, either a porous-medium penalty
``F_m(a1*rho1 + a2*rho2)`` or the hard constraint ``a1*rho1 + a2*rho2 <= 1``.
The inner minimization is solved in the dynamic (density/momentum) formulation
by an augmented-Lagrangian saddle-point iteration.
"""

from .grids import Grid2D, ScalarField, SpaceTimeGrid, build_grid
from .energy import (
    Congestion,
    DensityPair,
    EnergySpec,
    HARD,
    PorousMedium,
    ProxResult,
    SolverError,
    eval_energy,
    f_m,
    f_m_prime,
    pressure_field,
    prox_density,
)
from .alg2 import Alg2Config, Alg2State, JkoStepStats, jko_step, project_K
from .simulate import (
    DiagnosticsRecord,
    SimulationConfig,
    SimulationResult,
    l1_contraction_experiment,
    m_limit_experiment,
    run_simulation,
)

__all__ = [
    "Alg2Config",
    "Alg2State",
    "Congestion",
    "DensityPair",
    "DiagnosticsRecord",
    "EnergySpec",
    "Grid2D",
    "HARD",
    "JkoStepStats",
    "PorousMedium",
    "ProxResult",
    "ScalarField",
    "SimulationConfig",
    "SimulationResult",
    "SolverError",
    "SpaceTimeGrid",
    "build_grid",
    "eval_energy",
    "f_m",
    "f_m_prime",
    "jko_step",
    "l1_contraction_experiment",
    "m_limit_experiment",
    "pressure_field",
    "project_K",
    "prox_density",
    "run_simulation",
]

__version__ = "0.1.0"
