"""Hybrid fog / multi-hop dissemination of critical messages in vehicular networks."""

__version__ = "0.1.0"
