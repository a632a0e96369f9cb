"""Desk-scale morphing-attack laboratory: tiny style-based generator,
latent-space morph construction, and biometric vulnerability metrics."""

__version__ = "0.1.0"
