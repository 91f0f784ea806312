"""Deep-model training protocol over the shared dataset file format."""

__version__ = "0.1.0"
