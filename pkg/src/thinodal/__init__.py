"""Neumann eigenpairs and nodal sets of thin convex domains."""
__version__ = "0.1.0"
