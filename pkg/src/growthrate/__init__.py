"""Growth-rate invariants of filtered systems, Hamiltonian orbit censuses,
conjugacy growth of free products and loop-space growth on flat tori."""

from .fds import FiniteFDS, FDSMorphism, GammaEstimate, SampledGrowth, gamma
from .divisor import DivisorModel, depth_d, m_A
from .hamiltonian import NuProfile, census, growth_exponent

__all__ = [
    "FiniteFDS", "FDSMorphism", "GammaEstimate", "SampledGrowth", "gamma",
    "DivisorModel", "depth_d", "m_A", "NuProfile", "census", "growth_exponent",
]
__version__ = "0.1.0"
