"""Transient stability of systems mixing synchronous generators and droop inverters."""

__version__ = "0.1.0"
