"""Numerical laboratory for PT-symmetric nonlinear plaquettes.

Four small gain-loss oligomers (three four-site squares and a five-site
cross) with onsite cubic nonlinearity: linear spectra and exceptional
points, closed-form stationary branches with Newton refinement and
continuation in the gain-loss parameter, linear stability classification,
and direct time integration with conservation diagnostics.
"""

from ptplaq.kernels import backend_name

__version__ = "0.1.0"

__all__ = ["__version__", "backend_name"]
