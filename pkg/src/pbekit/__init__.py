"""Interactive programming-by-examples synthesis with version space algebras."""

__version__ = "0.1.0"
