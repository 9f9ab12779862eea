"""Deterministic slot-based simulator and policy library for fair
distribution of constrained grid power to home-charging electric
vehicles."""

__version__ = "0.1.0"
