"""Simulator for Q(lambda)-routed multi-hop UAV relay networks."""

__version__ = "0.1.0"
