"""Context mining and long-tail evaluation toolkit for dialogue-based propensity models."""

__version__ = "0.1.0"
