"""Numerical kernels: grid densities, semi-discrete transport, PDE, dynamics."""
