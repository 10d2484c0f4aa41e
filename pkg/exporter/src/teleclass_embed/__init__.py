"""Batch text embedding exporter for the teleclass vectors.jsonl format."""

__version__ = "0.1.0"
