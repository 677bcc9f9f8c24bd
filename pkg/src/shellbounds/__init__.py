"""Translation bounds on the inclusion area of two-phase shallow shells."""

__version__ = "0.1.0"
