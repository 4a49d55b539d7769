"""Design-space exploration for message-passing graph neural networks."""

from gnnspace.kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
