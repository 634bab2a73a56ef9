"""clausecraft: learn set-literal constraint theories from tabular data,
craft adversarial examples against a small classifier, and project
non-compliant examples back onto the constraint-compliant space."""

__version__ = "0.1.0"
