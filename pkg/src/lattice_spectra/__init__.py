"""Capacitance-matrix spectra of periodic and finite resonator arrays."""

__version__ = "0.1.0"
