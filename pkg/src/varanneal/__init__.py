"""Variational quantum annealing on product-state and matrix-product-state manifolds."""

__version__ = "0.1.0"
