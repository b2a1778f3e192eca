"""Packet-level simulator of a server-centric PON data-centre testbed."""

__version__ = "0.1.0"
