"""Stored-energy distributions and uplink outage for energy-harvesting nodes with a buffer."""

from .eh_model import ConfigError, GammaEHModel, Imperfections, Policy, PolicySpec
from .special_fn import NumericError, RegimeError

__all__ = ["ConfigError", "GammaEHModel", "Imperfections", "NumericError", "Policy",
           "PolicySpec", "RegimeError"]
__version__ = "0.1.0"
