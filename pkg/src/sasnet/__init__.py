"""High-level and plausible Petri nets with an emulated MAPE-K managing loop."""

__version__ = "0.1.0"
