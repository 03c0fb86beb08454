"""Thermal Casimir-Polder forces, shifts and rates near layered magnetoelectrics.

Modules
-------
quad
    Adaptive panel quadrature, principal values, Matsubara summation.
greenfunc
    Layered-stack scattering Green tensor at the atom and inside the body.
thermalenv
    Per-region absorption kernels and occupation-weighted noise spectra.
atomdyn
    Transition rates, level shifts and population dynamics.
forcecore
    Level-resolved and population-averaged forces; equilibrium reductions.
cli
    Scenario files in, deterministic result tables out.

The names below cover the common workflow: build an atom, a stack and a
temperature field, get rates and shifts, then forces.
"""

__version__ = "0.1.0"

from .atomdyn import (AtomSpec, Populations, RatesAndShifts,
                      coherence_evolution, evolve_populations,
                      rates_and_shifts, steady_state)
from .forcecore import (PART_NAMES, ForceResult, LevelForce,
                        equilibrium_force_matsubara, force_component,
                        lifshitz_force, polarisability, total_force)
from .greenfunc import Layer, LayerStack
from .materials import MaterialModel
from .thermalenv import TemperatureField, photon_number

__all__ = [
    "AtomSpec", "Populations", "RatesAndShifts", "coherence_evolution",
    "evolve_populations", "rates_and_shifts", "steady_state",
    "PART_NAMES", "ForceResult", "LevelForce", "equilibrium_force_matsubara",
    "force_component", "lifshitz_force", "polarisability", "total_force",
    "Layer", "LayerStack", "MaterialModel", "TemperatureField",
    "photon_number", "__version__",
]
