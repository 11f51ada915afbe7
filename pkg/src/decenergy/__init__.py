"""Hardware video-decoder energy modeling from software profiling features."""

__version__ = "0.1.0"
