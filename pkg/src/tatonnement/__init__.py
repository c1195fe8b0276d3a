"""Arrow-Debreu CES markets under proportional tatonnement: equilibria, spectra and dynamics."""

from .dynamics import (DynamicsKernel, Trajectory, build_D_analytic, build_D_numeric,
                       fit_decay_rate, project_out_kernel, simulate_ctpt)
from .equilibrium import Equilibrium, demand, excess_demand, solve_equilibrium, total_demand
from .errors import (DynamicsError, EquilibriumError, MarketError, NoiseError, SpectralError,
                     TatonnementError)
from .market import (Market, Potentials, ValidationReport, market_from_coefficients,
                     normalize_market, potentials, validate)
from .noise import NoiseReport, simulate_ou, stationary_prediction
from .spectral import (BoundsReport, SpectralReport, comparison_bounds, damping_rate,
                       laplacian, market_laplacian, q_eval)

__version__ = "0.1.0"

__all__ = [
    "BoundsReport", "DynamicsError", "DynamicsKernel", "Equilibrium", "EquilibriumError",
    "Market", "MarketError", "NoiseError", "NoiseReport", "Potentials", "SpectralError",
    "SpectralReport", "TatonnementError", "Trajectory", "ValidationReport",
    "build_D_analytic", "build_D_numeric", "comparison_bounds", "damping_rate", "demand",
    "excess_demand", "fit_decay_rate", "laplacian", "market_from_coefficients",
    "market_laplacian", "normalize_market", "potentials", "project_out_kernel", "q_eval",
    "simulate_ctpt", "simulate_ou", "solve_equilibrium", "stationary_prediction",
    "total_demand", "validate",
]
