"""Predictive mobility-aware routing simulator for UAV ad-hoc networks."""
__version__ = "0.1.0"
