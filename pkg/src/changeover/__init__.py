"""Multi-period portfolio changeover planning with whole shares and fixed fees."""

__version__ = "0.1.0"
