"""Neural PDE solvers: least-squares residual (DGM) and mixed first-order residual (MIM) losses."""

__version__ = "0.1.0"
