"""Modern-Hopfield denoising and test-time integration for frozen classifiers."""
from ._kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
