"""Diffuse domain method lab for parabolic Neumann problems on irregular 2-D domains."""

__version__ = "0.1.0"
