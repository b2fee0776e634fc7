"""Hybrid trust-based detection and isolation of DDoS-compromised IoT nodes."""

__version__ = "0.1.0"
