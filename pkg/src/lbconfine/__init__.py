"""Linear Boltzmann equation with a confining potential: admissibility checks,
spectral constants, a zero-solution criterion, a discrete collision operator and
a phase-space simulator."""

__version__ = "0.1.0"

from .potential import (Potential, PolynomialPotential, RadialPowerPotential, SeparablePowerPotential,
                        compute_S_phi, normalize, truncation_box)
from .quadrature import SpectralConstants, gibbs_rule, hermite_rule, spectral_constants, three_route_check
from .admissibility import Status, admissibility_report
from .criterion import assemble_criterion_matrix, zero_solution_verdict
from .collision import VelocityGrid, audit, build_collision_operator, coercivity_lambda0
from .kinetic import PhaseField, PhaseGrid, Stepper, StepperOptions, build_initial, decay_fit, simulate
from .config import RunConfig, parse_config

__all__ = [
    "Potential", "PolynomialPotential", "RadialPowerPotential", "SeparablePowerPotential",
    "compute_S_phi", "normalize", "truncation_box",
    "SpectralConstants", "gibbs_rule", "hermite_rule", "spectral_constants", "three_route_check",
    "Status", "admissibility_report", "assemble_criterion_matrix", "zero_solution_verdict",
    "VelocityGrid", "audit", "build_collision_operator", "coercivity_lambda0",
    "PhaseField", "PhaseGrid", "Stepper", "StepperOptions", "build_initial", "decay_fit", "simulate",
    "RunConfig", "parse_config",
]
