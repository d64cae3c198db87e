"""tabdetect: table-agnostic detection of synthetic tabular data."""

__version__ = "0.1.0"
