"""Wide inference networks (WIN5, WIN5-R, WIN5-RB) for Gaussian denoising."""
from ._backend import NAME as backend

__version__ = "0.1.0"

__all__ = ["backend", "__version__"]
