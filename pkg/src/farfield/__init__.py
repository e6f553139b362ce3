"""Far-field speech simulation and enhancement toolkit."""

__version__ = "0.1.0"
