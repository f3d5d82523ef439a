"""Compile sparse tensor algebra to a parallel-pattern dataflow IR."""

__version__ = "0.1.0"
