"""Rumor thread analysis: SDQC stance classification and veracity prediction."""

__version__ = "0.1.0"
