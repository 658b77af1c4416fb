"""Desk-scale simulator and analysis toolkit for trapped-ion quantum state engineering.

A single 40Ca+ ion (or a short string) in a Paul trap: the S-D qubit
coupled to quantised motion, laser pulses and sideband cooling, Coulomb
crystal modes, a small pulse-sequence language with shot sampling, and the
fits that turn simulated data back into temperatures, Fock populations,
coherence times and heating rates.
"""

__version__ = "0.1.0"

from .core import (CA40, FockSpace, IonSpecies, PhononDistribution, QuantumState, TrapConfig,
                   coupling_element, coupling_strength, doppler_limit_nbar, lamb_dicke,
                   thermal_distribution)
from .crystal import (axial_modes, crystal_modes, equilibrium_positions, identify_sidebands,
                      radial_modes)
from .dsl import LabConfig, Sequence, format_sequence, parse_config, parse_sequence
from .dynamics import (CoolingParams, NoiseModel, Pulse, build_drive, evolve_lindblad,
                       evolve_unitary, gate_speed_scan, sideband_cool)
from .errors import (ConditioningError, DomainError, FitError, IntegratorError, IonLabError,
                     ParseError, SchemaError, SolverError)
from .experiment import ScanResult, flop_scan, run_point, scan

__all__ = [
    "CA40", "FockSpace", "IonSpecies", "PhononDistribution", "QuantumState", "TrapConfig",
    "coupling_element", "coupling_strength", "doppler_limit_nbar", "lamb_dicke",
    "thermal_distribution", "axial_modes", "crystal_modes", "equilibrium_positions",
    "identify_sidebands", "radial_modes", "LabConfig", "Sequence", "format_sequence",
    "parse_config", "parse_sequence", "CoolingParams", "NoiseModel", "Pulse", "build_drive",
    "evolve_lindblad", "evolve_unitary", "gate_speed_scan", "sideband_cool", "ConditioningError",
    "DomainError", "FitError", "IntegratorError", "IonLabError", "ParseError", "SchemaError",
    "SolverError", "ScanResult", "flop_scan", "run_point", "scan",
]
