"""Packet-level fat-tree simulator and throughput models for Swift-family
congestion control under per-packet load balancing."""

__version__ = "0.1.0"
