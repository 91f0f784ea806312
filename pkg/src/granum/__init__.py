"""Weakly-supervised fine-grained semantic indexing engine and
retrospective benchmark builder."""

__version__ = "0.1.0"
