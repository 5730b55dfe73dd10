"""Subprocess shim for executing generated solver scripts."""

from .cli import execute, main, scan_objective

__all__ = ["execute", "main", "scan_objective"]
