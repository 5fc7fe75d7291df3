"""Template-guided active feature acquisition toolkit."""

__version__ = "0.1.0"
