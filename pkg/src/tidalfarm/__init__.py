"""Continuous tidal turbine farm design by adjoint-based optimization."""
from tidalfarm.version import __version__

__all__ = ['__version__']
