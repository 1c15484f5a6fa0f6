"""Render figures from admissions-market sweep CSVs.

Consumes the solver CLI's CSV outputs only; never recomputes model
quantities.  All renders are deterministic: identical inputs and tool
versions produce byte-identical image files.
"""

__version__ = "0.1.0"


class PlotError(Exception):
    """Invalid figure request: bad inputs, missing columns, missing combos."""
