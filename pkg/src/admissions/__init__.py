"""Continuum college-admissions markets with group-dependent score correlation.

Solves the market-clearing equation for stable-matching cutoffs, evaluates
welfare and inequality metrics, constructs tie-breaking distributions, and
runs the comparative-statics experiment grids.
"""

__version__ = "0.1.0"
