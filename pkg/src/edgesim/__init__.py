"""Simulated edge computers, a network and dispatchers that choose between them."""

__version__ = "0.1.0"
