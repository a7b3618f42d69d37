"""Simulation and analysis toolkit for metaverse mobility."""

__version__ = "0.1.0"
