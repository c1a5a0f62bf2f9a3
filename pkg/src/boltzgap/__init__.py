"""Numerical laboratory for the spatially homogeneous Boltzmann equation with
cutoff hard potentials: collision operator, linearized spectra, spectral-gap
and relaxation-rate verification at desk scale."""

__version__ = "0.1.0"
