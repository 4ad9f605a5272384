"""Psychometric evaluation of tests and questionnaires."""

__version__ = "0.1.0"
