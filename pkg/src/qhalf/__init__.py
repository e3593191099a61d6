"""Grid experiments for multivalued Dirichlet minimizers with a half-sheet interface."""

__version__ = "0.1.0"
