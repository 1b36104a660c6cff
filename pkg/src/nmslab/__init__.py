"""Numerical laboratory for fractional perimeters, nonlocal curvature and stickiness."""

from __future__ import annotations

__version__ = "0.1.0"
