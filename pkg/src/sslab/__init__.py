"""Classification under strategic self-selection."""

__version__ = "0.1.0"
