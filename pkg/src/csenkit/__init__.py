"""Compressive-sensing support estimation: proxies, convolutional support
estimators, classical sparse solvers, learning-aided weighted recovery and an
experiment harness."""

__version__ = "0.1.0"
