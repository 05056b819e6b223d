"""Anisotropic curve shortening flow of triple junction networks."""
__version__ = "0.1.0"
