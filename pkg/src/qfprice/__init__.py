"""Option pricing from Fourier series learned by quantum circuit models."""

__version__ = "0.1.0"
