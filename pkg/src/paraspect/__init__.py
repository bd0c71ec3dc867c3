"""Spectral toolkit for paradifferential calculus on the torus.

Dyadic frequency decompositions with adjustable block size, smoothed
coefficient operators with a quadrature oracle, global paracomposition
under rough changes of variable, the water-wave symbol reduction, and a
semiclassical propagator with dispersive-decay measurements.  Each part
ships a verification suite; see the ``verify`` command line entry point.
"""

__version__ = "0.1.0"
