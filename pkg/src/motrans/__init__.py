"""Multi-objective evolutionary search over transformer encoder-decoder architectures."""

__version__ = "0.1.0"
