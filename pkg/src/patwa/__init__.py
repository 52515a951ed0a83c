"""Evaluation and scaling-law tooling for Jamaican Patois music transcription."""

__version__ = "0.1.0"
