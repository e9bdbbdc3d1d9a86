"""Spiking neural state machine for detecting monotonic heart-rate trends."""

__version__ = "0.1.0"
