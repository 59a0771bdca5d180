"""Gender-bias testing framework for text-to-image models."""

__version__ = "0.1.0"

SCHEMA_VERSION = 1
