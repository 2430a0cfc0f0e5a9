"""Numerical laboratory for the kinetic limit of the cubic Schrodinger equation with random data."""
__version__ = "0.1.0"
