"""Deep convolutional/highway classifier and class-optimization motif extraction for DNA."""

__version__ = "0.1.0"
