"""Exhaustive harvesting from a result-capped search engine, plus citation and
reader indicators for a dissertation collection."""

__version__ = "0.1.0"
