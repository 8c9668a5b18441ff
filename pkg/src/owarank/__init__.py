"""Fair learning to rank through an OWA ranking-policy layer."""

__version__ = "0.1.0"
