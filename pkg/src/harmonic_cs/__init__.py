"""Numerical harmonic theory for almost complex structures."""
