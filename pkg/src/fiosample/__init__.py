"""Semiclassical sampling of Radon-type transforms at desk scale."""

__version__ = "0.1.0"
