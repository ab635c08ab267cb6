"""Pretrained text and image embedding exporter for the graph classifier."""

__version__ = "0.1.0"
