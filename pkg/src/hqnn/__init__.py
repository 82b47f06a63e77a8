"""Hybrid quantum-classical binary image classifiers built on a small autodiff core."""
__version__ = "0.1.0"
