"""Desk-scale simulator for split-and-recombine and slanted-groove micromixers."""

__version__ = "0.1.0"
