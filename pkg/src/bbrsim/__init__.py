"""Packet-level simulator and congestion-control suite for BBR and its variants."""

__version__ = "0.1.0"
