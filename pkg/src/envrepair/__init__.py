"""Infer and repair the runtime environment of a single Python source file."""

__version__ = "0.1.0"
