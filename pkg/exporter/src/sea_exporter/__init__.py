"""Bridge from pretrained vision/text/LLM models to the sea tensor format."""

__version__ = "0.1.0"
