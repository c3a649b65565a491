"""Verification toolkit for machines with coarse and fine event schedules."""

__version__ = "0.1.0"
