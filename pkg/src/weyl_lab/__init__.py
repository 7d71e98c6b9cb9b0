"""Spectral projector kernels on flat tori and round spheres.

Modules:

``specfun``     Bessel functions, zonal kernels, sphere measures and model kernels.
``manifolds``   Flat tori and round spheres with exact geodesics.
``spectra``     Exact torus modes and sphere levels in frequency windows, with a disk cache.
``kernels``     Projector kernels, Weyl remainders and scaling-limit errors.
``embedding``   Eigenfunction embeddings of tori and their induced distances.
``experiments`` Configured experiment suites; ``cli`` is the command line front end.
"""

from .errors import DomainError, ResourceError
from .manifolds import FlatTorus, RoundSphere
from .spectra import SpectralWindow

__all__ = ["DomainError", "ResourceError", "FlatTorus", "RoundSphere", "SpectralWindow"]
