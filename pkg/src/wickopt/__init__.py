"""Spectral-density design of porous evaporator wicks."""

__version__ = "0.1.0"
