"""Dual-pathway trajectory planner: a sampling fast pathway, a reasoning slow pathway and the glue between them."""

__version__ = "0.1.0"
