"""Hybrid-MIMO transmitter simulator with single-input closed-loop DPD."""

__version__ = "0.1.0"
