"""Preconditioned adjoint systems for coupled evolution equations."""

__version__ = "0.1.0"
