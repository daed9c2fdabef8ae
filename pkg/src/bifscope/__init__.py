"""Exact sampled-data stability analysis of PWM DC-DC converters."""

__version__ = "0.1.0"
