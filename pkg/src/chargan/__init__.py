"""Progressive classifier-GAN training and noisy character classification on CPU."""

__version__ = "0.1.0"

from .tensor import Tensor, no_grad, set_debug_checks

__all__ = ["Tensor", "no_grad", "set_debug_checks", "__version__"]
