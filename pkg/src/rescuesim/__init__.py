"""Hazard-rescue simulation benchmark: dynamic fire, flood and wind scenes with baseline agents."""

__version__ = "0.1.0"
