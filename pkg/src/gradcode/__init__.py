"""Gradient coding with arbitrary data placement: stragglers, adversaries, approximate decoding."""

__version__ = "0.1.0"
