"""Multimodal interaction-graph classification with an adaptive residual
multi-head graph attention network."""

__version__ = "0.1.0"
