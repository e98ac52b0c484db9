"""Verifiable caption-hallucination rewards and evaluation tooling."""

__version__ = "0.1.0"
