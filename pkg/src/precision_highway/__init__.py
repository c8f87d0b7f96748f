"""Quantization simulation of precision highways in residual networks and LSTMs."""

__version__ = "0.1.0"
