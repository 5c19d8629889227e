"""Semantic degrees for industrial automation: degree advisor, knowledge store,
unit reasoning, constraints, plug-and-sense bus, line coordination and
configuration mapping."""

__version__ = "0.1.0"
