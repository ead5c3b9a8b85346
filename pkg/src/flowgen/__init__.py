"""Synthetic optical-flow data generation by 2D cut-and-paste compositing."""

__version__ = "0.1.0"
