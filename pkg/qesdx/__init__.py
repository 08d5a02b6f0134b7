"""Quasi-exactly solvable potentials from Darboux transformations of the
radial sextic oscillator."""

__version__ = "0.1.0"
