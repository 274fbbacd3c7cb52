"""Uplink bandwidth model and TTI-level scheduler simulation for smart-meter traffic over LTE-TDD."""

__version__ = "0.1.0"
