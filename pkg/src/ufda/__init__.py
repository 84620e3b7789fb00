"""Feature-level source-free universal domain adaptation engine."""

__version__ = "0.1.0"
