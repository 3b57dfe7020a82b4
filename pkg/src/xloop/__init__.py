"""Explanation-in-the-loop model streamlining for tabular classifiers."""

__version__ = "0.1.0"
