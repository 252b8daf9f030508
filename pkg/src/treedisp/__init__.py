"""Schrödinger evolution kernels on regular combinatorial and quantum trees."""
__version__ = "0.1.0"
