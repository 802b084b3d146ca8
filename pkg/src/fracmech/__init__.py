"""Fractional variational mechanics on uniform grids.

Grunwald-Letnikov operators, a small symbolic expression engine, and the
Euler-Lagrange / Hamilton machinery for Lagrangians built on ladders of
fractional derivatives, with a Newton solver for linear-velocity models.
"""

__version__ = "0.1.0"
