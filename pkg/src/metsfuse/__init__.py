"""Multimodal metabolic-syndrome screening from diary text and wearable physiology."""

__version__ = "0.1.0"
