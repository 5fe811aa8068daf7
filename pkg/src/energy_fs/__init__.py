"""Feature management engine for energy ML pipelines."""
__version__ = "0.1.0"
