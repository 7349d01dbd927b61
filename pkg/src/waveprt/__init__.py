"""Neural-wavelet precomputed radiance transfer engine."""

__version__ = "0.1.0"
