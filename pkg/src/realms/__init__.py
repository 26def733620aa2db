"""Decoherent histories, coarse graining and maximum-entropy effective states."""

__version__ = "0.1.0"
