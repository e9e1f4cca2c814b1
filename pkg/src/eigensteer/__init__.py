"""Spectral-Galerkin synthesis of bilinear controls steering parabolic equations onto eigensolutions."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .spectral_problems import GALLERY, SpectralProblem, get_problem  # noqa: F401
