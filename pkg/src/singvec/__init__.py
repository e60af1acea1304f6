"""Weighted singular vectors in the plane: lattice tools, approximation, fractal tree, dimension calculus."""

__version__ = "0.1.0"
