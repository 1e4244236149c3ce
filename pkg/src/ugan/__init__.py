"""Adversarial underwater image restoration (UGAN / UGAN-P)."""

__version__ = "0.1.0"
