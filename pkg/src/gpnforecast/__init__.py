"""Forecast gaming-private-network ping from session telemetry."""

__version__ = "0.1.0"
