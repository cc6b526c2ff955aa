"""Figure rendering for the acoustics solver's CSV artifacts."""

__version__ = "0.1.0"
