"""Thermodynamics of N two-level dipoles coupled to a single cavity mode.

Natural units: hbar = k_B = 1, energies and temperatures in units of the
cavity frequency omega_c unless set otherwise.
"""
from .model import FockTruncation, ModelParams, assemble_sector, displacement_block
from .spin import SpinSector, multiplicity, sectors, spin_matrices
from .thermo import (
    Phase,
    critical_temperature,
    free_energy,
    heat_capacity,
    susceptibility_curve,
    thermal_ensemble,
)

__version__ = "0.1.0"

__all__ = [
    "FockTruncation",
    "ModelParams",
    "Phase",
    "SpinSector",
    "assemble_sector",
    "critical_temperature",
    "displacement_block",
    "free_energy",
    "heat_capacity",
    "multiplicity",
    "sectors",
    "spin_matrices",
    "susceptibility_curve",
    "thermal_ensemble",
]
