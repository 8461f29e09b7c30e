"""Continuous-variable simulator for frame-independent transmission of a real number
encoded in two-mode angular-momentum-like eigenstates."""

__version__ = "0.1.0"
