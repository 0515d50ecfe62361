"""Metropolis-Hastings on a landscape-modified energy.

Energies above a threshold ``c`` are damped by a penalty function, which
lowers barriers and speeds up mixing; a self-normalizing weight removes
the resulting bias from time averages.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    DomainError,
    EnergyRef,
    LandscapeParams,
    NumericalError,
    PenaltyFunction,
    acceptance_factor,
    energy_delta,
    psi,
    quadrature_oracle,
    weight,
)
from .models import IsingModel, ModelError, PottsModel, TabularModel, load_tabular, reference_chain  # noqa: E402
from .sim import Schedule, Trajectory, simulate_annealed, simulate_homogeneous  # noqa: E402
