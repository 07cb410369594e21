"""Constructive single-hidden-layer ReLU and softmax approximation toolkit."""

__version__ = "0.1.0"
