"""Mixture-of-experts generator, relativistic discriminator and feature
statistics alignment for adversarial text generation on synthetic data."""
from moegan.kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
