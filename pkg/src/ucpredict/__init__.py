"""Unit-commitment prediction with distributionally robust SVMs and a
warm-started branch-and-bound MISOCP solver."""

__version__ = "0.1.0"
