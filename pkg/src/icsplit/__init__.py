"""One-class feature learning by intra-class splitting."""

__version__ = "0.1.0"
