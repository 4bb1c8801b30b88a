"""Channel models and particle simulation for a vesicle-based membrane-fusion transmitter."""

from .curves import CirCurve
from .params import (BitTxParams, ChannelParams, MobileParams, ParameterError, SimParams,
                     StaticGeometry, load_config, save_config, validate)
from .release import (EigenSpectrum, eigen_sum, release_cdf, release_pdf, release_window,
                      solve_eigenvalues)

__version__ = "0.1.0"

__all__ = [
    "BitTxParams", "ChannelParams", "CirCurve", "EigenSpectrum", "MobileParams",
    "ParameterError", "SimParams", "StaticGeometry", "eigen_sum", "load_config",
    "release_cdf", "release_pdf", "release_window", "save_config", "solve_eigenvalues",
    "validate",
]
