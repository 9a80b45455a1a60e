"""Numerical microlocal analysis of generalized Radon transforms over quadric level sets."""

__version__ = "0.1.0"
