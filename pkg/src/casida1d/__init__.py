"""Linear response of adiabatic TDDFT on a one-dimensional soft-Coulomb model."""

__version__ = "0.1.0"
