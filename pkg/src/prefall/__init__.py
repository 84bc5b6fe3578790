"""Pre-impact fall detection from 2D skeletal angle features and a minimal LSTM."""

__version__ = "0.1.0"
