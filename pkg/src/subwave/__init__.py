"""Capacitance matrices and band structures of subwavelength resonator
chains in a singly periodic strip.

Pipeline: :mod:`geometry` builds a chain and its panel mesh,
:mod:`qpgreen` evaluates the quasi-periodic Green function, :mod:`bem`
assembles and solves the single-layer system, :mod:`capmat` post-processes
capacitance matrices and :mod:`spectra` solves the eigenproblem over the
Brillouin zone.  :mod:`cli` drives complete experiments.
"""

from .bem import NearSingularError, compute_capacitance
from .capmat import CapacitanceMatrix, band_truncate, hermitian_part, midpoint_alpha_grid
from .geometry import ResonatorChain, Scenario, ScenarioConfig, build_scenario, discretize
from .qpgreen import GreenParams
from .spectra import BandStructure, band_sweep, classify_defects

__version__ = "0.1.0"

__all__ = [
    "NearSingularError",
    "compute_capacitance",
    "CapacitanceMatrix",
    "band_truncate",
    "hermitian_part",
    "midpoint_alpha_grid",
    "ResonatorChain",
    "Scenario",
    "ScenarioConfig",
    "build_scenario",
    "discretize",
    "GreenParams",
    "BandStructure",
    "band_sweep",
    "classify_defects",
]
