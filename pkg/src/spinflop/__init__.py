"""Rotator spins under a frozen doubly alternating visible pattern."""

from __future__ import annotations

__version__ = "0.1.0"
