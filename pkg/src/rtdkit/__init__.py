"""Run-time distribution toolkit for randomized SAT local search."""

__version__ = "0.1.0"
