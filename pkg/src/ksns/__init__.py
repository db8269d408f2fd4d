"""Drift-diffusion, optimal transport and coupled chemotaxis-fluid solvers on periodic grids."""

__version__ = "0.1.0"
