"""Figure rendering over run-directory CSV output.

Strictly read-only and one-way: this package consumes the CSV files and
plain-text manifest a simulation run leaves behind and never imports the
simulator.  Every number that ends up on a figure comes from a CSV cell.
"""

from .render import KINDS, PlotJob, render
from .schema import SchemaError

__all__ = ["KINDS", "PlotJob", "render", "SchemaError"]
