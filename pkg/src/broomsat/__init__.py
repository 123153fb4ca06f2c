"""Broomrape infestation detection from Sentinel-2 time series.

Scene bundles -> spectral indices and biophysical traits -> thermal-time
alignment -> vegetation masking -> LSTM pixel classifier -> evaluation.
"""

from .errors import BroomsatError, ConfigError, DataError, FormatError, NumericError

__version__ = "0.1.0"

__all__ = ["BroomsatError", "ConfigError", "DataError", "FormatError", "NumericError",
           "__version__"]
