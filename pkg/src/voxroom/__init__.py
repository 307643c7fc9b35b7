"""voxroom: headless collaborative volume/mesh visualization engine."""

__version__ = "0.1.0"
