"""Discriminatively trained reconstruction embedding for surface anomaly detection."""

__version__ = "0.1.0"
