"""Probabilistic architecture search over a fine-grained 3D MBConv video space."""

__version__ = "0.1.0"
