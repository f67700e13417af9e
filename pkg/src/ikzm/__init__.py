"""Kink formation in transverse-field Ising chains with spatially varying couplings.

Submodules:

- ``model``: chain and ramp types, analytic KZM / IKZM predictions
- ``fermion``: exact free-fermion evolution (Majorana covariance)
- ``mps``: DMRG ground states and TEBD evolution
- ``scaling``: power-law fits and two-regime segmentation
- ``harness``, ``config``, ``figures``, ``cli``: sweeps, persistence and plots
"""

from .model import ChainSpec, CriticalExponents, QuenchProtocol, predict
from .scaling import SweepCurve, fit_power_law, segment_regimes

__version__ = "0.1.0"

__all__ = [
    "ChainSpec",
    "CriticalExponents",
    "QuenchProtocol",
    "SweepCurve",
    "fit_power_law",
    "predict",
    "segment_regimes",
]
