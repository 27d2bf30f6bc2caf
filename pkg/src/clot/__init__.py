"""Closed-loop whole-body humanoid teleoperation toolkit."""

__version__ = "0.1.0"
