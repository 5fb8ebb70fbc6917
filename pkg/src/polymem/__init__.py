"""Approximate polytope membership with quadtree space/time trade-offs."""

__version__ = "0.1.0"
