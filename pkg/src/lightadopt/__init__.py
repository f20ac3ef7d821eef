"""Agent-based simulation of household lighting adoption under EU lamp policies."""

__version__ = "0.1.0"
