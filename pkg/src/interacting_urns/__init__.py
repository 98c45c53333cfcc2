"""Interacting reinforced urn processes: structure, limits and simulation."""

__version__ = "0.1.0"
