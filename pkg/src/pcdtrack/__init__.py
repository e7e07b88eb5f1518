"""Point-cloud multi-person tracking and activity recognition."""

__version__ = "0.1.0"
