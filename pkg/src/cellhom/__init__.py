"""Effective permittivity and Mie-resonant permeability of periodic high-contrast dielectric cells."""

__version__ = "0.1.0"
