"""Feedforward gravity compensation for compliant legged climbing robots."""

__version__ = "0.1.0"
