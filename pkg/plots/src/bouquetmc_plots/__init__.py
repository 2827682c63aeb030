"""Static-figure rendering for bouquetmc bench CSVs."""

from .figures import FigureSpec, aggregate, default_spec, render

__version__ = "0.1.0"
