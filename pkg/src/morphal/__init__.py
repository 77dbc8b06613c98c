"""morphal: semi-supervised AAE + pool-based active learning engine."""

from morphal.backend import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
