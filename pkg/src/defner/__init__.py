"""Definition-augmented biomedical NER experiment pipeline."""

__version__ = "0.1.0"
