"""Homotopy transfer of A-infinity structures and triple products on elliptic curves."""

__version__ = "0.1.0"
